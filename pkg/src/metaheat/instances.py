"""Problem instances: generation, k-NN sparsification, file formats.

TSP instances are uniform points in the unit square with a uniform-degree
sparse out-edge table (each node keeps its min(k, n-1) nearest neighbors,
ordered by length with ties broken toward the lower node index).  MIS
instances are simple undirected graphs stored as a sorted (u < v) edge list.

Generators are pure functions of their parameters and seed; instance i of a
batch draws from an independent stream derived from (seed, i).
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInstanceError, ParseError

DENSE_LIMIT = 2000  # dense (k = n-1) TSP instances only below this size


def rng_for(*key):
    """Deterministic Generator for a tuple of non-negative integers."""
    return np.random.default_rng(np.random.SeedSequence(tuple(int(x) for x in key)))


@dataclass
class TspInstance:
    id: str
    coords: np.ndarray  # (n, 2) float64 in the unit square
    k: int
    nbr: np.ndarray  # (n, deg) int32 targets, ordered by (length, node id)
    nbr_len: np.ndarray  # (n, deg) float64 Euclidean lengths

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def deg(self):
        return self.nbr.shape[1]

    @property
    def n_edges(self):
        return self.nbr.size

    def edge_slot(self, u, v):
        """Slot of directed edge u->v in u's neighbor row, or -1 if absent."""
        row = self.nbr[u]
        hits = np.nonzero(row == v)[0]
        return int(hits[0]) if hits.size else -1

    def dist(self, u, v):
        d = self.coords[u] - self.coords[v]
        return float(np.hypot(d[0], d[1]))


@dataclass
class MisInstance:
    id: str
    n: int
    edges: np.ndarray  # (m, 2) int32, u < v, lexicographically sorted, unique
    _csr: tuple = field(default=None, repr=False, compare=False)

    @property
    def edge_count(self):
        return self.edges.shape[0]

    def csr(self):
        """(indptr, indices) int32 CSR adjacency, both edge directions."""
        if self._csr is None:
            if self.edge_count:
                u = self.edges[:, 0]
                v = self.edges[:, 1]
                heads = np.concatenate([u, v])
                tails = np.concatenate([v, u])
                order = np.lexsort((tails, heads))
                heads = heads[order]
                tails = tails[order]
                indptr = np.zeros(self.n + 1, dtype=np.int32)
                np.add.at(indptr, heads + 1, 1)
                indptr = np.cumsum(indptr, dtype=np.int32)
                indices = tails.astype(np.int32)
            else:
                indptr = np.zeros(self.n + 1, dtype=np.int32)
                indices = np.zeros(0, dtype=np.int32)
            self._csr = (indptr, indices)
        return self._csr

    def adj_masks(self):
        """Per-node neighbor bitmasks as Python ints (for exact solvers)."""
        masks = [0] * self.n
        for u, v in self.edges:
            masks[u] |= 1 << int(v)
            masks[v] |= 1 << int(u)
        return masks

    def degrees(self):
        deg = np.zeros(self.n, dtype=np.int64)
        if self.edge_count:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg


def _validate_mis_edges(n, edges):
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int32)
    edges = np.asarray(edges, dtype=np.int64)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise InvalidInstanceError("edge list must have shape (m, 2)")
    if (edges < 0).any() or (edges >= n).any():
        raise InvalidInstanceError("edge endpoint out of range")
    if (edges[:, 0] == edges[:, 1]).any():
        raise InvalidInstanceError("self loops are not allowed")
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    canon = np.stack([lo, hi], axis=1)
    canon = np.unique(canon, axis=0)
    return canon.astype(np.int32)


def make_mis_instance(n, edges, id="mis"):
    if n < 1:
        raise InvalidInstanceError("need at least one node")
    return MisInstance(id=id, n=int(n), edges=_validate_mis_edges(n, np.asarray(edges)))


def sparsify_knn(coords, k, id="tsp"):
    """Build a TspInstance keeping each node's min(k, n-1) nearest out-edges.

    Neighbor rows are ordered by (distance, node index); the same rule picks
    which neighbors survive when distances tie at the cutoff.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n < 3:
        raise InvalidInstanceError("TSP instance needs n >= 3")
    if k < 1:
        raise InvalidInstanceError("k must be >= 1")
    deg = min(int(k), n - 1)
    nbr = np.empty((n, deg), dtype=np.int32)
    nbr_len = np.empty((n, deg), dtype=np.float64)
    block = max(1, min(n, int(2**22) // max(n, 1)))
    ids = np.arange(n)
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        diff = coords[lo:hi, None, :] - coords[None, :, :]
        d = np.sqrt((diff * diff).sum(axis=2))
        for r in range(lo, hi):
            row = d[r - lo]
            row[r] = np.inf
            order = np.lexsort((ids, row))[:deg]
            nbr[r] = order
            nbr_len[r] = row[order]
    return TspInstance(id=id, coords=coords, k=int(k), nbr=nbr, nbr_len=nbr_len)


def gen_tsp_uniform(n, count, seed, k=None):
    """Generate `count` uniform unit-square TSP instances.

    k=None materializes the dense instance (k = n-1), only allowed for
    n <= DENSE_LIMIT; pass an explicit k beyond that.
    """
    if n < 3:
        raise InvalidInstanceError("TSP instance needs n >= 3")
    if count < 1:
        raise InvalidInstanceError("count must be >= 1")
    if k is None:
        if n > DENSE_LIMIT:
            raise InvalidInstanceError(
                f"dense TSP instances only materialized for n <= {DENSE_LIMIT}; pass k"
            )
        k = n - 1
    out = []
    for i in range(count):
        rng = rng_for(seed, 11, i)
        coords = rng.random((n, 2))
        out.append(sparsify_knn(coords, k, id=f"tsp-n{n}-s{seed}-i{i:04d}"))
    return out


def gen_er(n_lo, n_hi, p, count, seed):
    """Generate `count` Erdos-Renyi G(n, p) graphs, n uniform in [n_lo, n_hi]."""
    if not (1 <= n_lo <= n_hi):
        raise InvalidInstanceError("need 1 <= n_lo <= n_hi")
    if not (0.0 <= p <= 1.0):
        raise InvalidInstanceError("p must be in [0, 1]")
    if count < 1:
        raise InvalidInstanceError("count must be >= 1")
    out = []
    for i in range(count):
        rng = rng_for(seed, 22, i)
        n = int(rng.integers(n_lo, n_hi + 1))
        rows = []
        for u in range(n - 1):
            hits = np.nonzero(rng.random(n - u - 1) < p)[0]
            if hits.size:
                rows.append(np.stack([np.full(hits.size, u), u + 1 + hits], axis=1))
        edges = np.concatenate(rows, axis=0) if rows else np.zeros((0, 2), dtype=np.int64)
        out.append(
            MisInstance(
                id=f"er-n{n}-s{seed}-i{i:04d}",
                n=n,
                edges=_validate_mis_edges(n, edges),
            )
        )
    return out


# ---------------------------------------------------------------------------
# file formats


def write_tsp(inst, path):
    """'tsp <n> <k>' header plus one '<x> <y>' line per node (round-trip exact)."""
    with open(path, "w") as f:
        f.write(f"tsp {inst.n} {inst.k}\n")
        for x, y in inst.coords:
            f.write(f"{float(x)!r} {float(y)!r}\n")


def read_tsp(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    head = lines[0].split()
    if len(head) != 3 or head[0] != "tsp":
        raise ParseError("expected header 'tsp <n> <k>'", line=1)
    try:
        n, k = int(head[1]), int(head[2])
    except ValueError:
        raise ParseError("non-integer n/k in header", line=1) from None
    if len(lines) < 1 + n:
        raise ParseError(f"expected {n} coordinate lines", line=len(lines))
    coords = np.empty((n, 2), dtype=np.float64)
    for i in range(n):
        parts = lines[1 + i].split()
        if len(parts) != 2:
            raise ParseError("expected '<x> <y>'", line=2 + i)
        try:
            coords[i, 0] = float(parts[0])
            coords[i, 1] = float(parts[1])
        except ValueError:
            raise ParseError("bad coordinate", line=2 + i) from None
    # sparse edges are recomputed from coordinates, not stored
    return sparsify_knn(coords, k, id=os.path.splitext(os.path.basename(path))[0])


def write_dimacs(inst, path):
    with open(path, "w") as f:
        f.write(f"p edge {inst.n} {inst.edge_count}\n")
        for u, v in inst.edges:
            f.write(f"e {u + 1} {v + 1}\n")


def read_dimacs(path):
    n = None
    edges = []
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("c"):
                continue
            parts = line.split()
            if parts[0] == "p":
                if len(parts) != 4 or parts[1] != "edge":
                    raise ParseError("expected 'p edge <n> <m>'", line=ln)
                try:
                    n = int(parts[2])
                    int(parts[3])
                except ValueError:
                    raise ParseError("non-integer problem line", line=ln) from None
                if n < 1:
                    raise ParseError("n must be >= 1", line=ln)
            elif parts[0] == "e":
                if n is None:
                    raise ParseError("edge before problem line", line=ln)
                if len(parts) != 3:
                    raise ParseError("expected 'e <u> <v>'", line=ln)
                try:
                    u, v = int(parts[1]), int(parts[2])
                except ValueError:
                    raise ParseError("non-integer endpoint", line=ln) from None
                if not (1 <= u <= n and 1 <= v <= n):
                    raise ParseError(f"endpoint out of range 1..{n}", line=ln)
                if u == v:
                    raise ParseError("self loop", line=ln)
                edges.append((u - 1, v - 1))
            else:
                raise ParseError(f"unrecognized record {parts[0]!r}", line=ln)
    if n is None:
        raise ParseError("missing problem line", line=1)
    arr = np.asarray(edges, dtype=np.int64) if edges else np.zeros((0, 2))
    return MisInstance(
        id=os.path.splitext(os.path.basename(path))[0],
        n=n,
        edges=_validate_mis_edges(n, arr),
    )


def read_cnf(path):
    """DIMACS CNF -> (num_vars, clauses as tuples of signed literals)."""
    nv = nc = None
    clauses = []
    cur = []
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("c") or line.startswith("%"):
                continue
            parts = line.split()
            if parts[0] == "p":
                if len(parts) != 4 or parts[1] != "cnf":
                    raise ParseError("expected 'p cnf <vars> <clauses>'", line=ln)
                try:
                    nv, nc = int(parts[2]), int(parts[3])
                except ValueError:
                    raise ParseError("non-integer problem line", line=ln) from None
            else:
                if nv is None:
                    raise ParseError("clause before problem line", line=ln)
                for tok in parts:
                    try:
                        lit = int(tok)
                    except ValueError:
                        raise ParseError(f"non-integer literal {tok!r}", line=ln) from None
                    if lit == 0:
                        clauses.append(tuple(cur))
                        cur = []
                    else:
                        if abs(lit) > nv:
                            raise ParseError(f"literal {lit} out of range", line=ln)
                        cur.append(lit)
    if nv is None:
        raise ParseError("missing problem line", line=1)
    if cur:
        clauses.append(tuple(cur))
    if nc is not None and len(clauses) != nc:
        raise ParseError(f"expected {nc} clauses, found {len(clauses)}", line=1)
    return nv, clauses


def reduce_cnf_to_mis(num_vars, clauses, id="cnf"):
    """Literal-occurrence reduction: one node per literal occurrence, cliques
    within each clause, an edge between every complementary pair of
    occurrences.  The MIS size equals the clause count iff the formula is
    satisfiable."""
    if not clauses:
        raise InvalidInstanceError("formula has no clauses")
    nodes = []  # (clause index, literal)
    for ci, clause in enumerate(clauses):
        if len(clause) == 0:
            raise InvalidInstanceError(f"clause {ci} is empty")
        for lit in clause:
            if lit == 0 or abs(lit) > num_vars:
                raise InvalidInstanceError(f"literal {lit} out of range")
            nodes.append((ci, lit))
    n = len(nodes)
    edges = []
    by_clause = {}
    for idx, (ci, lit) in enumerate(nodes):
        by_clause.setdefault(ci, []).append(idx)
    for members in by_clause.values():
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                edges.append((members[i], members[j]))
    by_lit = {}
    for idx, (_, lit) in enumerate(nodes):
        by_lit.setdefault(lit, []).append(idx)
    for lit, members in by_lit.items():
        if lit > 0 and -lit in by_lit:
            for a in members:
                for b in by_lit[-lit]:
                    edges.append((a, b))
    arr = np.asarray(edges, dtype=np.int64) if edges else np.zeros((0, 2))
    inst = MisInstance(id=id, n=n, edges=_validate_mis_edges(n, arr))
    return inst, nodes
