"""Reference solvers: exact DP, branch and bound, and classic heuristics."""

import itertools
import types

import numpy as np
import pytest

import metaheat as mh
from metaheat import kernels, oracles
from metaheat.errors import InvalidInstanceError, ParameterError, SizeError

from conftest import c5, er_inst, k3, p3, square_inst, tsp_inst


def brute_force_tour(inst):
    """Every tour with node 0 pinned first, evaluated in vectorized chunks."""
    dist = oracles.dense_dist(inst.coords)
    rest = range(1, inst.n)
    best = np.inf
    it = itertools.permutations(rest)
    while True:
        chunk = np.array(list(itertools.islice(it, 50_000)), dtype=np.int64)
        if chunk.size == 0:
            break
        tours = np.concatenate(
            [np.zeros((len(chunk), 1), dtype=np.int64), chunk], axis=1)
        costs = dist[tours, np.roll(tours, -1, axis=1)].sum(axis=1)
        best = min(best, float(costs.min()))
    return best


def independence_number(inst):
    """Test-local recursion: branch on the lowest available vertex."""
    adj = inst.adj_masks()
    memo = {}

    def rec(avail):
        if avail == 0:
            return 0
        if avail in memo:
            return memo[avail]
        v = (avail & -avail).bit_length() - 1
        take = 1 + rec(avail & ~(adj[v] | (1 << v)))
        skip = rec(avail & ~(1 << v))
        memo[avail] = best = max(take, skip)
        return best

    return rec((1 << inst.n) - 1)


def test_exact_tour_square():
    res = oracles.held_karp(square_inst())
    assert res.objective == pytest.approx(4.0, abs=1e-12)
    assert res.proven
    assert res.nodes == 1 << 3


def test_exact_tour_matches_brute_force():
    inst = tsp_inst(10, 7)
    res = oracles.held_karp(inst)
    assert res.objective == pytest.approx(brute_force_tour(inst), abs=1e-9)
    perm = np.asarray(res.solution)
    assert sorted(perm.tolist()) == list(range(10))
    assert kernels.tour_len(inst.coords, perm.astype(np.int32)) == \
        pytest.approx(res.objective, abs=1e-9)


def test_exact_tour_size_cap():
    with pytest.raises(SizeError):
        oracles.held_karp(tsp_inst(21, 600))
    big = tsp_inst(21, 600)
    assert oracles.held_karp(big, max_nodes=21).proven  # cap is adjustable


def test_exact_set_small_graphs():
    assert oracles.exact_mis(k3()).objective == 1
    assert oracles.exact_mis(c5()).objective == 2
    res = oracles.exact_mis(p3())
    assert res.objective == 2
    assert set(res.solution.order) == {0, 2}
    star = mh.make_mis_instance(6, [(0, i) for i in range(1, 6)], id="star")
    st = oracles.exact_mis(star)
    assert st.objective == 5
    assert not st.solution.members[0]


def test_exact_set_matches_naive_recursion():
    g = er_inst(25, 0.15, 3)
    res = oracles.exact_mis(g)
    assert res.proven
    assert res.objective == independence_number(g)
    assert mh.check_feasible(g, res.solution)[0]


def test_exact_set_budget_degrades_gracefully():
    g = er_inst(30, 0.15, 601)
    full = oracles.exact_mis(g)
    starved = oracles.exact_mis(g, budget=10)
    assert not starved.proven
    assert starved.objective <= full.objective
    assert starved.objective >= oracles.greedy_degree_mis(g).size  # seeded
    assert mh.check_feasible(g, starved.solution)[0]
    with pytest.raises(SizeError):
        oracles.exact_mis(er_inst(61, 0.05, 602), max_nodes=60)


@pytest.mark.parametrize("rule", ["nearest", "random", "farthest"])
def test_insertion_square_is_optimal(rule):
    inst = square_inst()
    tour = oracles.insertion(inst, rule, rng=mh.rng_for(603))
    assert kernels.tour_len(inst.coords, tour) == pytest.approx(4.0,
                                                                abs=1e-12)


@pytest.mark.parametrize("rule", ["nearest", "random", "farthest"])
def test_insertion_validity_and_bound(rule):
    inst = tsp_inst(10, 604)
    hk = oracles.held_karp(inst).objective
    tour = oracles.insertion(inst, rule, rng=mh.rng_for(605))
    assert sorted(tour.tolist()) == list(range(10))
    assert kernels.tour_len(inst.coords, tour) >= hk - 1e-9
    if rule == "random":
        again = oracles.insertion(inst, rule, rng=mh.rng_for(605))
        assert tour.tolist() == again.tolist()


def test_insertion_argument_errors():
    inst = tsp_inst(8, 606)
    with pytest.raises(ParameterError):
        oracles.insertion(inst, "cheapest-ever")
    with pytest.raises(ParameterError):
        oracles.insertion(inst, "random")  # rng required
    stub = types.SimpleNamespace(n=2, coords=np.zeros((2, 2)))
    with pytest.raises(InvalidInstanceError):
        oracles.insertion(stub, "nearest")


def test_farthest_insertion_quality_band():
    """On large uniform instances the tour should sit a modest, stable
    percentage above the random-point tour-length scaling sqrt(n)."""
    reference = 0.7124 * np.sqrt(1000)
    drops = []
    for seed in (607, 608, 609):
        inst = tsp_inst(1000, seed)
        tour = oracles.insertion(inst, "farthest")
        cost = float(kernels.tour_len(inst.coords, tour))
        drops.append(mh.compute_drop(cost, reference, "min"))
    assert 8.0 <= np.mean(drops) <= 16.0


def test_degree_greedy_set():
    assert set(oracles.greedy_degree_mis(p3()).order) == {0, 2}
    assert oracles.greedy_degree_mis(k3()).size == 1
    assert oracles.greedy_degree_mis(k3()).order.tolist() == [0]
    assert oracles.greedy_degree_mis(c5()).size == 2
    for i in range(10):
        g = er_inst(20, 0.2, 610 + i)
        picked = oracles.greedy_degree_mis(g)
        assert mh.check_feasible(g, picked)[0]  # independent AND maximal
        assert picked.size <= oracles.exact_mis(g).objective
