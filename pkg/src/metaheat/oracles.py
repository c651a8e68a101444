"""Exact solvers and classical heuristics used as ground truth and baselines.

The dynamic-programming tour solver and the branch-and-bound set solver are
the reference points all learned results are scored against at desk scale;
the insertion family and the min-degree greedy provide the classical
baseline rows for benchmark reports.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInstanceError, ParameterError, SizeError
from .solution_space import NodeSet

HELD_KARP_MAX = 20  # 2^(n-1) * (n-1) float64 table, ~80 MB at the cap
EXACT_MIS_MAX = 60
EXACT_MIS_BUDGET = 10_000_000


@dataclass
class OracleResult:
    solution: object
    objective: float
    proven: bool
    nodes: int
    wall_ms: float


def dense_dist(coords):
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def held_karp(inst, max_nodes=HELD_KARP_MAX):
    """Provably optimal tour by subset dynamic programming.

    Uses full Euclidean distances, so optimality is unconditional even on
    sparsified instances."""
    if inst.n > max_nodes:
        raise SizeError(f"exact tour solver capped at n <= {max_nodes}, got {inst.n}")
    t0 = time.perf_counter()
    dist = dense_dist(inst.coords)
    cost, tour = kernels.held_karp_dp(dist)
    wall = (time.perf_counter() - t0) * 1000.0
    return OracleResult(tour, float(cost), True, (1 << (inst.n - 1)), wall)


def _clique_cover_bound(avail, adj):
    # partition the available vertices into cliques; each clique holds at most
    # one member of any independent set
    bound = 0
    rem = avail
    while rem:
        v = (rem & -rem).bit_length() - 1
        rem &= ~(1 << v)
        cand = rem & adj[v]
        while cand:
            u = (cand & -cand).bit_length() - 1
            rem &= ~(1 << u)
            cand &= adj[u] & ~(1 << u)
        bound += 1
    return bound


def exact_mis(inst, budget=EXACT_MIS_BUDGET, max_nodes=EXACT_MIS_MAX):
    """Maximum independent set by branch and bound on the max-degree vertex
    with a greedy clique-cover bound.  Past the node budget the best set
    found so far is returned with proven=False."""
    if inst.n > max_nodes:
        raise SizeError(f"exact set solver capped at n <= {max_nodes}, got {inst.n}")
    t0 = time.perf_counter()
    n = inst.n
    adj = inst.adj_masks()
    seed_set = greedy_degree_mis(inst)
    best_mask = 0
    for v in np.nonzero(seed_set.members)[0]:
        best_mask |= 1 << int(v)
    best_size = seed_set.size
    full = (1 << n) - 1
    counter = [0]
    out_of_budget = [False]

    def rec(avail, size, chosen):
        nonlocal best_mask, best_size
        counter[0] += 1
        if counter[0] > budget:
            out_of_budget[0] = True
            return
        if not avail:
            if size > best_size:
                best_size, best_mask = size, chosen
            return
        if size + _clique_cover_bound(avail, adj) <= best_size:
            return
        v, vdeg = -1, -1
        rest = avail
        while rest:
            u = (rest & -rest).bit_length() - 1
            rest &= ~(1 << u)
            d = bin(adj[u] & avail).count("1")
            if d > vdeg:
                v, vdeg = u, d
        if vdeg == 0:
            size += bin(avail).count("1")
            if size > best_size:
                best_size, best_mask = size, chosen | avail
            return
        rec(avail & ~(adj[v] | (1 << v)), size + 1, chosen | (1 << v))
        if not out_of_budget[0]:
            rec(avail & ~(1 << v), size, chosen)

    rec(full, 0, 0)
    members = np.zeros(n, dtype=bool)
    order = []
    for v in range(n):
        if (best_mask >> v) & 1:
            members[v] = True
            order.append(v)
    sol = NodeSet(order=np.array(order, dtype=np.int32), members=members)
    wall = (time.perf_counter() - t0) * 1000.0
    return OracleResult(sol, float(best_size), not out_of_budget[0], counter[0], wall)


def insertion(inst, rule, rng=None):
    """Classic insertion tour construction; grows a cycle by inserting the
    selected city at the cheapest position.  rule picks the next city:
    nearest / farthest by distance to the partial tour, or uniformly at
    random (rng required)."""
    if rule not in ("nearest", "random", "farthest"):
        raise ParameterError(f"unknown insertion rule {rule!r}")
    n = inst.n
    if n < 3:
        raise InvalidInstanceError("insertion needs at least 3 nodes")
    if rule == "random" and rng is None:
        raise ParameterError("random insertion needs an rng")
    dist = dense_dist(inst.coords)
    if rule == "random":
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
    else:
        masked = dist + np.where(np.eye(n, dtype=bool), np.inf, 0.0)
        flat = int(np.argmin(masked)) if rule == "nearest" else int(np.argmax(dist))
        a, b = divmod(flat, n)
    tour = [a, b]
    in_tour = np.zeros(n, dtype=bool)
    in_tour[[a, b]] = True
    mind = np.minimum(dist[:, a], dist[:, b])
    for _ in range(n - 2):
        sel = np.where(in_tour, np.inf if rule != "farthest" else -np.inf, mind)
        if rule == "nearest":
            c = int(np.argmin(sel))
        elif rule == "farthest":
            c = int(np.argmax(sel))
        else:
            rem = np.nonzero(~in_tour)[0]
            c = int(rem[int(rng.integers(len(rem)))])
        arr = np.array(tour)
        nxt = np.roll(arr, -1)
        inc = dist[arr, c] + dist[c, nxt] - dist[arr, nxt]
        pos = int(np.argmin(inc))
        tour.insert(pos + 1, c)
        in_tour[c] = True
        mind = np.minimum(mind, dist[:, c])
    return np.array(tour, dtype=np.int32)


def greedy_degree_mis(inst):
    """Repeatedly take the minimum-degree available node (degrees in the
    shrinking residual graph, ties to the lower id); maximal by construction."""
    n = inst.n
    indptr, indices = inst.csr()
    alive = np.ones(n, dtype=bool)
    deg = np.diff(indptr).astype(np.int64)
    members = np.zeros(n, dtype=bool)
    order = []
    remaining = n
    while remaining > 0:
        v = int(np.argmin(np.where(alive, deg, np.iinfo(np.int64).max)))
        members[v] = True
        order.append(v)
        drop = [v] + [int(u) for u in indices[indptr[v]:indptr[v + 1]] if alive[u]]
        for u in drop:
            alive[u] = False
            remaining -= 1
            for w in indices[indptr[u]:indptr[u + 1]]:
                if alive[w]:
                    deg[w] -= 1
    return NodeSet(order=np.array(order, dtype=np.int32), members=members)
