"""Greedy / best-of-K / 2-opt / tree-search decoding routes."""

import numpy as np
import pytest

import metaheat as mh
from metaheat import kernels, oracles
from metaheat.errors import ParameterError
from metaheat.solution_space import Theta, Tour

from conftest import k3, p3, square_inst, tsp_inst


def test_greedy_node_set_follows_scores():
    g = p3()
    picked = mh.greedy_decode(Theta("mis", np.array([0.0, 5.0, 0.0])), g)
    assert set(picked.order) == {1}
    assert picked.size == 1
    picked = mh.greedy_decode(Theta("mis", np.array([5.0, 0.0, 4.0])), g)
    assert set(picked.order) == {0, 2}
    assert picked.members[[0, 2]].all() and not picked.members[1]


def test_greedy_tour_square():
    inst = square_inst()
    theta = mh.uniform_heatmap(inst, "tsp")
    tour = mh.greedy_decode(theta, inst, start=0)
    assert tour.perm.tolist() == [0, 1, 2, 3]  # nearest neighbor, low-id ties
    assert tour.cost == pytest.approx(4.0, abs=1e-12)


def test_greedy_tour_start_handling():
    inst = tsp_inst(7, 500)
    theta = mh.uniform_heatmap(inst, "tsp")
    with pytest.raises(ParameterError):
        mh.greedy_decode(theta, inst)  # no rng, no pinned start
    with pytest.raises(ParameterError):
        mh.greedy_decode(theta, inst, start=-1)
    with pytest.raises(ParameterError):
        mh.greedy_decode(theta, inst, start=7)
    for s in range(7):
        assert mh.greedy_decode(theta, inst, start=s).perm[0] == s
    # rng draws the start when none is pinned
    tour = mh.greedy_decode(theta, inst, rng=mh.rng_for(501))
    assert 0 <= tour.perm[0] < 7


def test_greedy_edgeless_graph_takes_everything():
    g = mh.make_mis_instance(4, [], id="void4")
    picked = mh.greedy_decode(mh.uniform_heatmap(g, "mis"), g)
    assert picked.order.tolist() == [0, 1, 2, 3]  # score ties -> lower id
    assert picked.size == 4


def test_sample_decode_more_draws_never_hurt():
    inst = tsp_inst(15, 502)
    theta = mh.rank_heatmap(inst)
    few, many = [], []
    for t in range(30):
        few.append(mh.sample_decode(theta, inst, 4, 1.0,
                                    mh.rng_for(503, t)).cost)
        many.append(mh.sample_decode(theta, inst, 64, 1.0,
                                     mh.rng_for(504, t)).cost)
    assert np.mean(many) <= np.mean(few)


def test_sample_decode_square_finds_optimum():
    inst = square_inst()
    tour = mh.sample_decode(mh.uniform_heatmap(inst, "tsp"), inst, 256, 1.0,
                            mh.rng_for(505))
    assert tour.cost == pytest.approx(4.0, abs=1e-12)


def test_two_opt_uncrosses_square():
    inst = square_inst()
    crossed = np.array([0, 2, 1, 3], dtype=np.int32)
    assert kernels.tour_len(inst.coords, crossed) == pytest.approx(
        2 + 2 * np.sqrt(2))
    fixed = mh.two_opt(inst, crossed)
    assert fixed.cost == pytest.approx(4.0, abs=1e-12)

    again = mh.two_opt(inst, fixed)
    assert again.perm.tolist() == fixed.perm.tolist()  # local opt is a fixpoint


def test_two_opt_never_worse_and_bounded_below():
    inst = tsp_inst(12, 506)
    hk = oracles.held_karp(inst).objective
    rng = mh.rng_for(507)
    for _ in range(20):
        perm = rng.permutation(12).astype(np.int32)
        before = float(kernels.tour_len(inst.coords, perm))
        after = mh.two_opt(inst, perm)
        assert after.cost <= before + 1e-12
        assert after.cost >= hk - 1e-9
        one_pass = mh.two_opt(inst, perm, max_passes=1)
        assert after.cost <= one_pass.cost <= before + 1e-12


def test_tree_search_zero_budget_is_greedy():
    inst = tsp_inst(10, 508)
    theta = mh.rank_heatmap(inst)
    a = mh.mcts_decode(theta, inst, 0, mh.rng_for(509))
    b = mh.greedy_decode(theta, inst, mh.rng_for(509))
    assert a.perm.tolist() == b.perm.tolist()
    assert a.cost == b.cost
    with pytest.raises(ParameterError):
        mh.mcts_decode(theta, inst, -1, mh.rng_for(510))


def test_tree_search_square_reaches_optimum():
    inst = square_inst()
    tour = mh.mcts_decode(mh.uniform_heatmap(inst, "tsp"), inst, 200,
                          mh.rng_for(511))
    assert tour.cost == pytest.approx(4.0, abs=1e-12)


def test_tree_search_never_worse_than_its_seed():
    for i in range(20):
        inst = tsp_inst(15, 520 + i)
        theta = mh.rank_heatmap(inst)
        seeded = mh.greedy_decode(theta, inst, mh.rng_for(521, i))
        searched = mh.mcts_decode(theta, inst, 1500, mh.rng_for(521, i))
        assert searched.cost <= seeded.cost + 1e-12


def test_tree_search_beats_greedy_on_average():
    g_costs, m_costs = [], []
    for i in range(10):
        inst = tsp_inst(20, 540 + i)
        theta = mh.rank_heatmap(inst)
        g_costs.append(mh.greedy_decode(theta, inst, mh.rng_for(541, i)).cost)
        m_costs.append(mh.mcts_decode(theta, inst, 5000,
                                      mh.rng_for(541, i)).cost)
    assert np.mean(m_costs) < np.mean(g_costs)


def test_rank_scores_shape_and_values():
    inst = tsp_inst(9, 542, k=4)
    theta = mh.rank_heatmap(inst)
    grid = theta.grid(inst)
    assert grid.shape == (9, 4)
    want = -np.log1p(np.arange(4, dtype=np.float64))
    assert np.allclose(grid, np.tile(want, (9, 1)), atol=0)


def test_uniform_scores_shape():
    inst = tsp_inst(6, 543, k=3)
    assert mh.uniform_heatmap(inst, "tsp").values.shape == (18,)
    assert (mh.uniform_heatmap(inst, "tsp").values == 0).all()
    g = k3()
    assert mh.uniform_heatmap(g, "mis").values.shape == (3,)
