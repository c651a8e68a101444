"""Instance generation, sparsification, file round-trips, CNF reduction."""

import itertools
import math

import numpy as np
import pytest

import metaheat as mh
from metaheat.errors import InvalidInstanceError, ParseError
from metaheat.instances import (make_mis_instance, read_cnf, read_dimacs,
                                read_tsp, reduce_cnf_to_mis, write_dimacs,
                                write_tsp)

from conftest import square_corners


# ---------------------------------------------------------------------------
# tour instance generation


def test_gen_tsp_shapes_and_range():
    insts = mh.gen_tsp_uniform(3, 2, seed=0)
    assert len(insts) == 2
    for inst in insts:
        assert inst.coords.shape == (3, 2)
        assert (inst.coords >= 0).all() and (inst.coords <= 1).all()
        assert inst.deg == 2  # complete digraph on 3 nodes


def test_gen_tsp_deterministic_and_streamed():
    a = mh.gen_tsp_uniform(6, 3, seed=9)
    b = mh.gen_tsp_uniform(6, 3, seed=9)
    for x, y in zip(a, b):
        assert np.array_equal(x.coords, y.coords)
    # instance i depends only on (seed, i): prefixes agree across counts
    c = mh.gen_tsp_uniform(6, 1, seed=9)
    assert np.array_equal(a[0].coords, c[0].coords)
    assert not np.array_equal(a[0].coords, a[1].coords)


def test_gen_tsp_mean_concentration():
    insts = mh.gen_tsp_uniform(1000, 128, seed=5)
    coords = np.stack([i.coords for i in insts])
    # 3-sigma band for the mean of 128,000 Unif(0,1) draws per axis
    for axis in range(2):
        assert 0.47 <= coords[..., axis].mean() <= 0.53


def test_gen_tsp_validation():
    with pytest.raises(InvalidInstanceError):
        mh.gen_tsp_uniform(2, 1, seed=0)
    with pytest.raises(InvalidInstanceError):
        mh.gen_tsp_uniform(5, 0, seed=0)


# ---------------------------------------------------------------------------
# k-NN sparsification


def test_sparsify_corners_k2_excludes_diagonals():
    inst = mh.sparsify_knn(square_corners(), 2)
    # corners in side order: each node's 2 nearest are its side-adjacent ones
    expected = {0: {1, 3}, 1: {0, 2}, 2: {1, 3}, 3: {0, 2}}
    for u in range(4):
        assert set(inst.nbr[u].tolist()) == expected[u]


def test_sparsify_complete_when_k_large():
    coords = mh.rng_for(31).random((7, 2))
    for k in (6, 10):
        inst = mh.sparsify_knn(coords, k)
        assert inst.deg == 6
        for u in range(7):
            assert set(inst.nbr[u].tolist()) == set(range(7)) - {u}


def test_sparsify_edge_count_forced():
    coords = mh.rng_for(32).random((1000, 2))
    inst = mh.sparsify_knn(coords, 50)
    assert inst.n_edges == 50_000


def test_sparsify_rows_sorted_and_lengths_exact():
    coords = mh.rng_for(33).random((40, 2))
    inst = mh.sparsify_knn(coords, 11)
    for u in range(inst.n):
        d = np.hypot(*(coords[inst.nbr[u]] - coords[u]).T)
        assert np.abs(d - inst.nbr_len[u]).max() <= 1e-12
        assert (np.diff(inst.nbr_len[u]) >= 0).all()


def test_sparsify_tie_break_lower_id():
    # from (0,0): nodes 1 and 2 are both at distance 1; keep the lower id
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    inst = mh.sparsify_knn(coords, 1)
    assert inst.nbr[0, 0] == 1


def test_sparsify_soundness():
    coords = mh.rng_for(34).random((30, 2))
    inst = mh.sparsify_knn(coords, 7)
    diff = coords[:, None, :] - coords[None, :, :]
    dense = np.sqrt((diff ** 2).sum(-1))
    for u in range(30):
        kept = set(inst.nbr[u].tolist())
        dropped = [v for v in range(30) if v != u and v not in kept]
        assert max(dense[u, sorted(kept)]) <= min(dense[u, dropped]) + 1e-15


# ---------------------------------------------------------------------------
# random graph generation


def test_gen_er_degenerate_probabilities():
    empty = mh.gen_er(20, 20, 0.0, 1, seed=1)[0]
    assert empty.edge_count == 0
    full = mh.gen_er(20, 20, 1.0, 1, seed=1)[0]
    assert full.edge_count == 190


def test_gen_er_edge_count_moment():
    insts = mh.gen_er(700, 700, 0.15, 16, seed=9)
    pairs = 700 * 699 // 2
    mean = np.mean([i.edge_count for i in insts])
    sigma = math.sqrt(pairs * 0.15 * 0.85 / 16)
    assert abs(mean - 0.15 * pairs) <= 3 * sigma


def test_gen_er_node_range_and_determinism():
    insts = mh.gen_er(5, 9, 0.3, 40, seed=3)
    ns = [i.n for i in insts]
    assert min(ns) >= 5 and max(ns) <= 9
    assert {5, 9} <= set(ns)  # both endpoints reachable
    again = mh.gen_er(5, 9, 0.3, 40, seed=3)
    for x, y in zip(insts, again):
        assert x.n == y.n and np.array_equal(x.edges, y.edges)
    with pytest.raises(InvalidInstanceError):
        mh.gen_er(5, 4, 0.3, 1, seed=0)
    with pytest.raises(InvalidInstanceError):
        mh.gen_er(5, 9, 1.5, 1, seed=0)


def test_mis_instance_structure():
    inst = make_mis_instance(4, [(0, 1), (2, 3), (1, 2)])
    assert inst.edge_count == 3
    indptr, indices = inst.csr()
    assert indptr[-1] == 6  # both directions
    assert np.array_equal(inst.degrees(), [1, 2, 2, 1])
    with pytest.raises(InvalidInstanceError):
        make_mis_instance(3, [(0, 0)])
    with pytest.raises(InvalidInstanceError):
        make_mis_instance(3, [(0, 5)])


# ---------------------------------------------------------------------------
# CNF reduction


def brute_force_sat(num_vars, clauses):
    for bits in itertools.product((False, True), repeat=num_vars):
        if all(any(bits[abs(l) - 1] == (l > 0) for l in cl) for cl in clauses):
            return True
    return False


def test_cnf_contradiction_and_tautology():
    unsat, nodes = reduce_cnf_to_mis(1, [[1], [-1]])
    assert unsat.n == 2 and unsat.edge_count == 1
    assert nodes == [(0, 1), (1, -1)]
    assert mh.exact_mis(unsat).objective == 1  # < 2 clauses: unsatisfiable

    sat, _ = reduce_cnf_to_mis(2, [[1, 2]])
    assert sat.n == 2 and sat.edge_count == 1
    assert mh.exact_mis(sat).objective == 1  # == 1 clause: satisfiable


def test_cnf_empty_clause_rejected():
    with pytest.raises(InvalidInstanceError):
        reduce_cnf_to_mis(2, [[1], []])


def random_cnf(num_vars, num_clauses, seed):
    rng = mh.rng_for(88, seed)
    clauses = []
    for _ in range(num_clauses):
        vs = rng.choice(num_vars, size=3, replace=False) + 1
        signs = rng.integers(0, 2, size=3) * 2 - 1
        clauses.append((vs * signs).tolist())
    return clauses


@pytest.mark.parametrize("num_clauses", [20, 45])
def test_cnf_reduction_matches_sat(num_clauses):
    """MIS size equals the clause count exactly when the formula is SAT."""
    clauses = random_cnf(10, num_clauses, seed=num_clauses)
    inst, _ = reduce_cnf_to_mis(10, clauses)
    res = mh.exact_mis(inst, max_nodes=3 * num_clauses)
    assert res.proven
    assert (res.objective == num_clauses) == brute_force_sat(10, clauses)


# ---------------------------------------------------------------------------
# file round-trips


def test_tsp_roundtrip_exact(tmp_path):
    inst = mh.sparsify_knn(square_corners(), 2, id="corners")
    path = tmp_path / "corners.tsp"
    write_tsp(inst, path)
    back = read_tsp(path)
    assert np.array_equal(back.coords, inst.coords)
    assert back.k == inst.k
    assert np.array_equal(back.nbr, inst.nbr)


def test_tsp_roundtrip_random_fullprecision(tmp_path):
    inst = mh.gen_tsp_uniform(17, 1, seed=6, k=5)[0]
    path = tmp_path / "r.tsp"
    write_tsp(inst, path)
    back = read_tsp(path)
    assert np.array_equal(back.coords, inst.coords)  # bit-exact text round-trip
    assert np.array_equal(back.nbr_len, inst.nbr_len)


def test_dimacs_example_and_roundtrip(tmp_path):
    path = tmp_path / "p3.dimacs"
    path.write_text("p edge 3 2\ne 1 2\ne 2 3\n")
    inst = read_dimacs(path)
    assert inst.n == 3
    assert inst.edges.tolist() == [[0, 1], [1, 2]]

    out = tmp_path / "again.dimacs"
    write_dimacs(inst, out)
    back = read_dimacs(out)
    assert back.n == inst.n and np.array_equal(back.edges, inst.edges)


def test_dimacs_errors_name_lines(tmp_path):
    path = tmp_path / "bad.dimacs"
    path.write_text("p edge 3 1\ne 1 5\n")
    with pytest.raises(ParseError) as exc:
        read_dimacs(path)
    assert exc.value.line == 2
    assert "line 2" in str(exc.value)

    path.write_text("e 1 2\n")
    with pytest.raises(ParseError):
        read_dimacs(path)


def test_tsp_parse_errors(tmp_path):
    path = tmp_path / "bad.tsp"
    path.write_text("tsp x 2\n")
    with pytest.raises(ParseError) as exc:
        read_tsp(path)
    assert exc.value.line == 1

    path.write_text("tsp 3 2\n0.1 0.2\n0.3 0.4\n")
    with pytest.raises(ParseError):
        read_tsp(path)

    path.write_text("tsp 3 2\n0.1 0.2\n0.3 nope\n0.5 0.6\n")
    with pytest.raises(ParseError) as exc:
        read_tsp(path)
    assert exc.value.line == 3


def test_read_cnf(tmp_path):
    path = tmp_path / "f.cnf"
    path.write_text("c comment\np cnf 3 2\n1 -2 0\n2 3 0\n")
    num_vars, clauses = read_cnf(path)
    assert num_vars == 3
    assert [list(c) for c in clauses] == [[1, -2], [2, 3]]

    path.write_text("p cnf 2 1\n1 9 0\n")
    with pytest.raises(ParseError):
        read_cnf(path)
