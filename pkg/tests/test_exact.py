from __future__ import annotations

import itertools

import numpy as np
import pytest

from fhsap.exact import EnumerationCapError, all_hub_maps, brute_force
from fhsap.formulations import eval_cost
from fhsap.instance import Assignment, generate_random

from conftest import two_by_two


def test_two_by_two_optimum():
    res = brute_force(two_by_two())
    assert res.cost == 5.0
    np.testing.assert_array_equal(res.assignment.hubs, [0, 1])
    assert res.enumerated == 4


def test_single_hub_and_zero_demand():
    inst = generate_random(5, 1, "const:0", 2)
    expected = sum(inst.demand[i, j] * (inst.cost_out[i, 0] + inst.cost_in[j, 0])
                   for i in range(5) for j in range(5))
    assert brute_force(inst).cost == pytest.approx(expected, rel=1e-12)
    zero = generate_random(4, 3, "const:10", 2).with_demand(np.zeros((4, 4)))
    res = brute_force(zero)
    assert res.cost == 0.0
    np.testing.assert_array_equal(res.assignment.hubs, [0, 0, 0, 0])


def test_lexicographic_order():
    maps = all_hub_maps(3, 2)
    assert [tuple(m) for m in maps] == list(itertools.product(range(2), repeat=3))
    np.testing.assert_array_equal(all_hub_maps(3, 3, 5, 7), [[0, 1, 2], [0, 2, 0]])


@pytest.mark.parametrize("seed", range(3))
def test_matches_naive_loop(seed):
    inst = generate_random(4, 3, "uniform:0:20", seed)
    costs = {h: eval_cost(inst, Assignment.from_hubs(h, 3)).total
             for h in itertools.product(range(3), repeat=4)}
    best = min(costs.values())
    first = next(h for h in itertools.product(range(3), repeat=4) if costs[h] == best)
    res = brute_force(inst, chunk=7)
    assert res.cost == pytest.approx(best, rel=1e-12)
    assert tuple(res.assignment.hubs) == first


def test_deterministic():
    inst = generate_random(6, 3, "const:10", 1)
    a, b = brute_force(inst), brute_force(inst)
    assert a.assignment == b.assignment and a.cost == b.cost


def test_cap_refusal_names_size():
    inst = generate_random(12, 4, "const:10", 0)
    with pytest.raises(EnumerationCapError, match=r"4\^12"):
        brute_force(inst, cap=10**6)
