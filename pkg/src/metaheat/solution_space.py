"""Solution spaces and the score-parameterized distributions over them.

A score table ``Theta`` assigns a real number to every sparse directed edge
(TSP) or node (MIS).  Two distributions matter:

* the chain-rule sampling distribution q: tours are grown from a uniformly
  random start node by repeated softmax over the scores of unvisited sparse
  neighbors (uniform fallback over all unvisited nodes at dead ends);
  node sets are grown by repeated softmax over the available set (nodes
  neither chosen nor adjacent to a chosen node) until it empties, so sampled
  sets are maximal by construction;
* the energy distribution p over the full feasible set, with the probability
  of a solution proportional to exp(sum of its member scores).

Exact enumeration of both, plus enumeration-exact gradients, are provided at
small sizes as ground truth for the stochastic machinery.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import FeasibilityError, ParameterError, ShapeError, SizeError

ENUM_TSP_MAX = 8
ENUM_MIS_MAX = 14
PROB_FLOOR = 1e-300
FALLBACK_GAP = 10.0  # off-list edges score min(theta) - FALLBACK_GAP


@dataclass
class Theta:
    """Flat score table; layout mirrors the instance (edge e = u*deg + slot)."""

    problem: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.problem not in ("tsp", "mis"):
            raise ParameterError(f"unknown problem {self.problem!r}")

    def validate(self, inst):
        want = inst.n_edges if self.problem == "tsp" else inst.n
        if self.values.shape != (want,):
            raise ShapeError(
                f"score table has shape {self.values.shape}, instance wants ({want},)"
            )
        if not np.isfinite(self.values).all():
            raise ParameterError("scores must be finite")

    def grid(self, inst):
        """(n, deg) view for TSP kernels."""
        self.validate(inst)
        return self.values.reshape(inst.n, inst.deg)


@dataclass
class Tour:
    perm: np.ndarray
    cost: float


@dataclass
class NodeSet:
    order: np.ndarray  # insertion order of the chosen nodes
    members: np.ndarray  # (n,) bool

    @property
    def size(self):
        return int(self.members.sum())

    @property
    def cost(self):
        return -float(self.size)


def _check_tau(tau):
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ParameterError(f"temperature must be positive and finite, got {tau}")


def canonical_tour(perm):
    """Directed cycle identity: rotate so node 0 leads (direction preserved)."""
    perm = list(int(x) for x in perm)
    i0 = perm.index(0)
    return tuple(perm[i0:] + perm[:i0])


def set_key(members):
    members = np.asarray(members)
    if members.dtype == bool:
        return tuple(int(i) for i in np.nonzero(members)[0])
    return tuple(sorted(int(i) for i in members))


def tour_cost(inst, perm):
    """Exact Euclidean cycle length; uses true distances even off the sparse list."""
    perm = np.asarray(perm, dtype=np.int32)
    if perm.shape != (inst.n,) or not np.array_equal(np.sort(perm), np.arange(inst.n)):
        raise FeasibilityError("not a permutation of the instance's nodes")
    return float(kernels.tour_len(inst.coords, perm))


def check_feasible(inst, solution, problem=None):
    """Return (ok, violations) without raising."""
    violations = []
    if problem == "tsp" or hasattr(inst, "coords"):
        perm = solution.perm if isinstance(solution, Tour) else np.asarray(solution)
        if perm.shape != (inst.n,):
            violations.append(f"length {perm.shape} != n {inst.n}")
        elif not np.array_equal(np.sort(perm), np.arange(inst.n)):
            violations.append("not a permutation")
    else:
        if isinstance(solution, NodeSet):
            members = solution.members
        else:
            members = np.zeros(inst.n, dtype=bool)
            members[np.asarray(list(solution), dtype=np.int64)] = True
        for u, v in inst.edges:
            if members[u] and members[v]:
                violations.append(f"edge ({u},{v}) inside the set")
        indptr, indices = inst.csr()
        for v in range(inst.n):
            if not members[v]:
                if not members[indices[indptr[v] : indptr[v + 1]]].any():
                    violations.append(f"node {v} could be added (not maximal)")
    return (len(violations) == 0, violations)


# ---------------------------------------------------------------------------
# sampling


def sample_tour_batch(theta, inst, rng, K, tau=1.0):
    """K tours from q at scores theta/tau: (tours, logprobs, costs) arrays."""
    _check_tau(tau)
    if K < 1:
        raise ParameterError("K must be >= 1")
    grid = theta.grid(inst)
    starts = rng.integers(0, inst.n, size=K).astype(np.int32)
    unif = rng.random((K, inst.n))
    return kernels.tsp_sample_batch(inst.coords, inst.nbr, grid, float(tau), starts, unif)


def sample_tour(theta, inst, rng, tau=1.0):
    tours, logps, costs = sample_tour_batch(theta, inst, rng, 1, tau)
    return Tour(perm=tours[0], cost=float(costs[0])), float(logps[0])


def sample_mis_batch(theta, inst, rng, K, tau=1.0):
    """K maximal sets: (orders padded with -1, sizes, logprobs) arrays."""
    _check_tau(tau)
    if K < 1:
        raise ParameterError("K must be >= 1")
    theta.validate(inst)
    indptr, indices = inst.csr()
    unif = rng.random((K, inst.n))
    return kernels.mis_sample_batch(indptr, indices, theta.values, float(tau), unif)


def sample_mis(theta, inst, rng, tau=1.0):
    orders, sizes, logps = sample_mis_batch(theta, inst, rng, 1, tau)
    size = int(sizes[0])
    members = np.zeros(inst.n, dtype=bool)
    members[orders[0, :size]] = True
    return NodeSet(order=orders[0, :size].copy(), members=members), float(logps[0])


# ---------------------------------------------------------------------------
# exact enumeration of q


def _tsp_step(inst, grid, tau, cur, visited):
    """Sampler's candidate rule at one step: (slots, probs) or (None, unvisited)."""
    slots = [s for s in range(inst.deg) if not visited[inst.nbr[cur, s]]]
    if slots:
        sc = np.array([grid[cur, s] for s in slots]) / tau
        w = np.exp(sc - sc.max())
        return slots, w / w.sum()
    rest = [j for j in range(inst.n) if not visited[j]]
    return None, rest


def enumerate_q(theta, inst, tau=1.0):
    """Exact q as {solution key: probability}.  TSP keys are canonical directed
    cycles (rotated to start at node 0); MIS keys are sorted member tuples."""
    _check_tau(tau)
    theta.validate(inst)
    if theta.problem == "tsp":
        return _enumerate_q_tsp(theta, inst, tau)
    return _enumerate_q_mis(theta, inst, tau)


def _enumerate_q_tsp(theta, inst, tau):
    n = inst.n
    if n > ENUM_TSP_MAX:
        raise SizeError(f"tour enumeration capped at n <= {ENUM_TSP_MAX}")
    grid = theta.grid(inst)
    res = {}
    visited = [False] * n
    path = [0] * n

    def walk(cur, depth, prob):
        if depth == n:
            key = canonical_tour(path)
            res[key] = res.get(key, 0.0) + prob
            return
        slots, extra = _tsp_step(inst, grid, tau, cur, visited)
        if slots is not None:
            for s, p in zip(slots, extra):
                nxt = int(inst.nbr[cur, s])
                visited[nxt] = True
                path[depth] = nxt
                walk(nxt, depth + 1, prob * float(p))
                visited[nxt] = False
        else:
            p = 1.0 / len(extra)
            for nxt in extra:
                visited[nxt] = True
                path[depth] = nxt
                walk(nxt, depth + 1, prob * p)
                visited[nxt] = False

    for start in range(n):
        visited[start] = True
        path[0] = start
        walk(start, 1, 1.0 / n)
        visited[start] = False
    return res


def _mis_avail(n, adj, chosen_mask):
    out = []
    for v in range(n):
        if not (chosen_mask >> v) & 1 and not (adj[v] & chosen_mask):
            out.append(v)
    return out


def _enumerate_q_mis(theta, inst, tau):
    n = inst.n
    if n > ENUM_MIS_MAX:
        raise SizeError(f"node-set enumeration capped at n <= {ENUM_MIS_MAX}")
    adj = inst.adj_masks()
    vals = theta.values / tau
    res = {}
    layer = {0: 1.0}
    while layer:
        nxt_layer = {}
        for mask, prob in layer.items():
            avail = _mis_avail(n, adj, mask)
            if not avail:
                key = tuple(v for v in range(n) if (mask >> v) & 1)
                res[key] = res.get(key, 0.0) + prob
                continue
            sc = vals[avail]
            w = np.exp(sc - sc.max())
            w /= w.sum()
            for v, p in zip(avail, w):
                nm = mask | (1 << v)
                nxt_layer[nm] = nxt_layer.get(nm, 0.0) + prob * float(p)
        layer = nxt_layer
    return res


# ---------------------------------------------------------------------------
# exact enumeration of the energy distribution p


def _tsp_edge_lookup(inst):
    lut = {}
    for u in range(inst.n):
        for s in range(inst.deg):
            lut[(u, int(inst.nbr[u, s]))] = u * inst.deg + s
    return lut


def enumerate_p(theta, inst):
    """Exact energy distribution over the feasible set as {key: probability}.

    TSP: all directed Hamiltonian cycles; an edge absent from the sparse list
    contributes the fallback score min(theta) - 10.  MIS: all maximal
    independent sets.  Normalization is over the enumerated feasible set.
    """
    theta.validate(inst)
    if theta.problem == "tsp":
        n = inst.n
        if n > ENUM_TSP_MAX:
            raise SizeError(f"tour enumeration capped at n <= {ENUM_TSP_MAX}")
        lut = _tsp_edge_lookup(inst)
        vals = theta.values
        fallback = float(vals.min()) - FALLBACK_GAP
        keys = []
        energies = []
        for rest in itertools.permutations(range(1, n)):
            perm = (0,) + rest
            e = 0.0
            for i in range(n):
                idx = lut.get((perm[i], perm[(i + 1) % n]))
                e += vals[idx] if idx is not None else fallback
            keys.append(perm)
            energies.append(e)
        energies = np.array(energies)
        w = np.exp(energies - energies.max())
        w /= w.sum()
        return dict(zip(keys, w))
    n = inst.n
    if n > ENUM_MIS_MAX:
        raise SizeError(f"node-set enumeration capped at n <= {ENUM_MIS_MAX}")
    adj = inst.adj_masks()
    keys = []
    energies = []
    for mask in range(1 << n):
        ok = True
        for v in range(n):
            if (mask >> v) & 1 and (adj[v] & mask):
                ok = False
                break
        if not ok:
            continue
        maximal = True
        for v in range(n):
            if not (mask >> v) & 1 and not (adj[v] & mask):
                maximal = False
                break
        if not maximal:
            continue
        members = tuple(v for v in range(n) if (mask >> v) & 1)
        keys.append(members)
        energies.append(float(theta.values[list(members)].sum()) if members else 0.0)
    energies = np.array(energies)
    w = np.exp(energies - energies.max())
    w /= w.sum()
    return dict(zip(keys, w))


# ---------------------------------------------------------------------------
# enumeration-exact gradients (ground truth for the REINFORCE estimator)


def tsp_expected_cost_grad(theta, inst, tau=1.0):
    """Exact (E_q[cost], d E_q[cost] / d theta) by enumerating all chains."""
    _check_tau(tau)
    theta.validate(inst)
    n = inst.n
    if n > ENUM_TSP_MAX:
        raise SizeError(f"tour enumeration capped at n <= {ENUM_TSP_MAX}")
    grid = theta.grid(inst)
    glog = np.zeros((n, inst.deg))
    grad = np.zeros((n, inst.deg))
    visited = [False] * n
    path = np.zeros(n, dtype=np.int32)
    total = [0.0]

    def walk(cur, depth, prob):
        if depth == n:
            c = float(kernels.tour_len(inst.coords, path))
            total[0] += prob * c
            grad[:] += (prob * c) * glog
            return
        slots, extra = _tsp_step(inst, grid, tau, cur, visited)
        if slots is not None:
            probs = extra
            for s, p in zip(slots, probs):
                nxt = int(inst.nbr[cur, s])
                for s2, p2 in zip(slots, probs):
                    glog[cur, s2] += (((1.0 if s2 == s else 0.0) - p2) / tau)
                visited[nxt] = True
                path[depth] = nxt
                walk(nxt, depth + 1, prob * float(p))
                visited[nxt] = False
                for s2, p2 in zip(slots, probs):
                    glog[cur, s2] -= (((1.0 if s2 == s else 0.0) - p2) / tau)
        else:
            p = 1.0 / len(extra)
            for nxt in extra:
                visited[nxt] = True
                path[depth] = nxt
                walk(nxt, depth + 1, prob * p)
                visited[nxt] = False

    for start in range(n):
        visited[start] = True
        path[0] = start
        walk(start, 1, 1.0 / n)
        visited[start] = False
    return total[0], grad.reshape(-1)


def tsp_target_logq_grad(theta, inst, target):
    """Exact (log q(target), d log q(target) / d theta) for a directed cycle."""
    theta.validate(inst)
    n = inst.n
    target = np.asarray(target, dtype=np.int64)
    if not np.array_equal(np.sort(target), np.arange(n)):
        raise FeasibilityError("target is not a permutation")
    grid = theta.grid(inst)
    succ = {int(target[i]): int(target[(i + 1) % n]) for i in range(n)}
    chain_ps = []
    chain_grads = []
    for start in range(n):
        visited = [False] * n
        visited[start] = True
        cur = start
        prob = 1.0
        g = np.zeros((n, inst.deg))
        for _ in range(n - 1):
            nxt = succ[cur]
            slots, extra = _tsp_step(inst, grid, 1.0, cur, visited)
            if slots is not None:
                probs = extra
                p_here = 0.0
                s_here = -1
                for s, p in zip(slots, probs):
                    if int(inst.nbr[cur, s]) == nxt:
                        p_here = float(p)
                        s_here = s
                        break
                if s_here < 0:
                    prob = 0.0
                    break
                for s2, p2 in zip(slots, probs):
                    g[cur, s2] += ((1.0 if s2 == s_here else 0.0) - p2)
                prob *= p_here
            else:
                prob *= 1.0 / len(extra)
            visited[nxt] = True
            cur = nxt
        chain_ps.append(prob / n)
        chain_grads.append(g)
    q = sum(chain_ps)
    grad = np.zeros((n, inst.deg))
    if q > 0.0:
        for cp, cg in zip(chain_ps, chain_grads):
            grad += cp * cg
        grad /= q
    return math.log(max(q, PROB_FLOOR)), grad.reshape(-1)


def _mis_state_sweep(theta, inst, tau, restrict_mask=None):
    """DP over reachable chosen-set states carrying (probability, gradient).

    Yields terminal (mask, P, D) triples; restrict_mask limits transitions to
    nodes inside that mask (used for target-set chains) while softmax
    denominators still range over the full available set.
    """
    n = inst.n
    if n > ENUM_MIS_MAX:
        raise SizeError(f"node-set enumeration capped at n <= {ENUM_MIS_MAX}")
    adj = inst.adj_masks()
    vals = theta.values / tau
    layer = {0: (1.0, np.zeros(n))}
    while layer:
        nxt_layer = {}
        for mask, (prob, dvec) in layer.items():
            avail = _mis_avail(n, adj, mask)
            if not avail:
                yield mask, prob, dvec
                continue
            sc = vals[avail]
            w = np.exp(sc - sc.max())
            w /= w.sum()
            for v, p in zip(avail, w):
                if restrict_mask is not None and not (restrict_mask >> v) & 1:
                    continue
                p = float(p)
                nm = mask | (1 << v)
                dlog = np.zeros(n)
                for j, pj in zip(avail, w):
                    dlog[j] = -float(pj) / tau
                dlog[v] += 1.0 / tau
                np_, nd = nxt_layer.get(nm, (0.0, None))
                add_d = dvec * p + prob * p * dlog
                if nd is None:
                    nxt_layer[nm] = (np_ + prob * p, add_d)
                else:
                    nxt_layer[nm] = (np_ + prob * p, nd + add_d)
        layer = nxt_layer


def mis_expected_cost_grad(theta, inst, tau=1.0):
    """Exact (E_q[-size], d E_q[-size] / d theta)."""
    _check_tau(tau)
    theta.validate(inst)
    total = 0.0
    grad = np.zeros(inst.n)
    for mask, prob, dvec in _mis_state_sweep(theta, inst, tau):
        c = -float(bin(mask).count("1"))
        total += prob * c
        grad += c * dvec
    return total, grad


def mis_target_logq_grad(theta, inst, target_members):
    """Exact (log q(target), gradient) for a maximal independent set."""
    theta.validate(inst)
    mask = 0
    for v in set_key(target_members):
        mask |= 1 << v
    adj = inst.adj_masks()
    if _mis_avail(inst.n, adj, mask):
        raise FeasibilityError("target set is not maximal; q(target) = 0")
    q = 0.0
    dvec = np.zeros(inst.n)
    for m, prob, d in _mis_state_sweep(theta, inst, 1.0, restrict_mask=mask):
        if m == mask:
            q += prob
            dvec += d
    grad = dvec / q if q > 0.0 else np.zeros(inst.n)
    return math.log(max(q, PROB_FLOOR)), grad
