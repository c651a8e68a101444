"""Turning a score table into one concrete feasible solution.

Four routes for tours: follow the best score greedily, draw many samples
and keep the best, polish with best-improvement 2-opt, or run a
score-guided tree search over 2-opt/3-opt reconnections.  Node sets use the
greedy and sampling routes only.
"""

import numpy as np

from . import kernels, solution_space
from .errors import ParameterError
from .solution_space import NodeSet, Theta, Tour

MCTS_CAND = 5  # candidate out-edges kept per node
MCTS_UCB = 1.0


def greedy_decode(theta, inst, rng=None, start=None):
    """Follow the highest-score available choice; tour start is drawn from
    the rng unless pinned.  Ties go to the lower node id."""
    if theta.problem == "tsp":
        if start is None:
            if rng is None:
                raise ParameterError("greedy tour decode needs an rng or a pinned start")
            start = int(rng.integers(0, inst.n))
        if not 0 <= start < inst.n:
            raise ParameterError(f"start node {start} out of range")
        tour, cost = kernels.tsp_greedy(inst.coords, inst.nbr, theta.grid(inst), start)
        return Tour(perm=tour, cost=float(cost))
    theta.validate(inst)
    indptr, indices = inst.csr()
    order, size = kernels.mis_greedy(indptr, indices, theta.values)
    members = np.zeros(inst.n, dtype=bool)
    members[order[:size]] = True
    return NodeSet(order=order[:size].copy(), members=members)


def sample_decode(theta, inst, K, tau, rng):
    """Best of K independent samples at theta/tau (lowest sample index wins
    ties)."""
    if theta.problem == "tsp":
        tours, _, costs = solution_space.sample_tour_batch(theta, inst, rng, K, tau)
        best = int(np.argmin(costs))
        return Tour(perm=tours[best].copy(), cost=float(costs[best]))
    orders, sizes, _ = solution_space.sample_mis_batch(theta, inst, rng, K, tau)
    best = int(np.argmax(sizes))
    size = int(sizes[best])
    members = np.zeros(inst.n, dtype=bool)
    members[orders[best, :size]] = True
    return NodeSet(order=orders[best, :size].copy(), members=members)


def two_opt(inst, tour, max_passes=0):
    """Best-improvement 2-opt until a local optimum (or the pass budget);
    each pass scans all exchanges and commits the single best one."""
    perm = np.array(tour.perm if isinstance(tour, Tour) else tour, dtype=np.int32)
    budget = max_passes if max_passes > 0 else np.iinfo(np.int64).max
    kernels.two_opt_best(inst.coords, perm, budget)
    return Tour(perm=perm, cost=float(kernels.tour_len(inst.coords, perm)))


def _mcts_candidates(theta, inst):
    grid = theta.grid(inst)
    m = min(MCTS_CAND, inst.deg)
    cand = np.empty((inst.n, m), dtype=np.int32)
    cand_cum = np.empty((inst.n, m))
    for u in range(inst.n):
        order = np.argsort(-grid[u], kind="stable")[:m]
        cand[u] = inst.nbr[u, order]
        w = np.exp(grid[u, order] - grid[u, order].max())
        cand_cum[u] = np.cumsum(w / w.sum())
    cnt = np.full(inst.n, m, dtype=np.int32)
    return cand, cand_cum, cnt


def mcts_decode(theta, inst, budget, rng, start=None, c_ucb=MCTS_UCB):
    """Score-guided segment-reconnection search from the greedy tour.

    Nodes are selected by past improvement plus an exploration bonus; the
    reconnection edges are drawn from the score-weighted candidate lists;
    only strictly improving tours are committed, so the result is never
    worse than the greedy start.  budget counts move evaluations."""
    if budget < 0:
        raise ParameterError("budget must be >= 0")
    seeded = greedy_decode(theta, inst, rng, start=start)
    if budget == 0:
        return seeded
    cand, cand_cum, cnt = _mcts_candidates(theta, inst)
    unif = rng.random((budget, 3))
    stall = max(5000, 10 * inst.n)
    tour, cost, _ = kernels.mcts_improve(
        inst.coords, seeded.perm, cand, cand_cum, cnt, unif, float(c_ucb), stall)
    return Tour(perm=tour, cost=float(cost))


def rank_heatmap(inst):
    """Training-free tour scores from neighbor ranks: the r-th nearest
    neighbor gets -log(1+r), so closer edges carry more probability mass."""
    ranks = np.tile(np.arange(inst.deg, dtype=np.float64), (inst.n, 1))
    return Theta("tsp", (-np.log1p(ranks)).reshape(-1))


def uniform_heatmap(inst, problem):
    size = inst.n_edges if problem == "tsp" else inst.n
    return Theta(problem, np.zeros(size))
