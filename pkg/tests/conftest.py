from __future__ import annotations

import numpy as np
import pytest

from fhsap.instance import Instance


def two_by_two(hub_cost: float = 3.0) -> Instance:
    """Two terminals, two hubs, one unit of demand 0 -> 1."""
    d = np.array([[0.0, 1.0], [0.0, 0.0]])
    c = np.array([[1.0, 5.0], [5.0, 1.0]])
    C = np.array([[0.0, hub_cost], [hub_cost, 0.0]])
    return Instance(2, 2, d, c, c.copy(), C)


@pytest.fixture
def tiny() -> Instance:
    return two_by_two()


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""

    def _record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
