"""Shared fixtures and counting/statistics helpers for the test suite."""

import math

import numpy as np
import pytest

import metaheat as mh

# ---------------------------------------------------------------------------
# instance shorthands


def square_corners():
    """Unit-square corners in side order: perimeter tour costs exactly 4."""
    return np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])


def square_inst():
    """The corners as a complete 4-node tour instance."""
    return mh.sparsify_knn(square_corners(), 3, id="square")


def tsp_inst(n, seed, k=None):
    return mh.gen_tsp_uniform(n, 1, seed, k=k)[0]


def er_inst(n, p, seed):
    return mh.gen_er(n, n, p, 1, seed)[0]


def p3():
    """Path graph 0-1-2: maximal independent sets {0,2} and {1}."""
    return mh.instances.make_mis_instance(3, [(0, 1), (1, 2)], id="p3")


def k3():
    return mh.instances.make_mis_instance(3, [(0, 1), (0, 2), (1, 2)], id="k3")


def c5():
    return mh.instances.make_mis_instance(
        5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)], id="c5")


# ---------------------------------------------------------------------------
# solution-class coding (for frequency counting against enumerations)


def tour_code(key, n):
    """Integer code of a canonical tour key (tuple starting at node 0)."""
    code = 0
    for v in key:
        code = code * n + int(v)
    return code


def tour_codes(tours):
    """Vectorized canonical codes for a (K, n) batch of tours."""
    tours = np.asarray(tours, dtype=np.int64)
    n = tours.shape[1]
    at0 = np.argmax(tours == 0, axis=1)
    cols = (at0[:, None] + np.arange(n)[None, :]) % n
    canon = np.take_along_axis(tours, cols, axis=1)
    code = np.zeros(len(canon), dtype=np.int64)
    for j in range(n):
        code = code * n + canon[:, j]
    return code


def set_code(key):
    return sum(1 << int(v) for v in key)


def set_codes(orders):
    """Vectorized membership bitmasks for a (K, n) batch of padded orders."""
    orders = np.asarray(orders, dtype=np.int64)
    bits = np.where(orders >= 0, np.int64(1) << np.clip(orders, 0, None), 0)
    return bits.sum(axis=1)


def count_codes(codes):
    vals, cnts = np.unique(codes, return_counts=True)
    return dict(zip(vals.tolist(), cnts.tolist()))


def chisq_pooled(expected, observed, n_samples, min_expected=10.0):
    """Pooled chi-square of observed counts against class probabilities.

    Classes with expected count below ``min_expected`` are pooled into one
    cell.  Returns (statistic, degrees of freedom, z-score of the statistic
    under its chi-square null).
    """
    keep_stat = 0.0
    cells = 0
    rest_exp = 0.0
    rest_obs = 0
    for key, p in expected.items():
        exp = p * n_samples
        obs = observed.get(key, 0)
        if exp >= min_expected:
            keep_stat += (obs - exp) ** 2 / exp
            cells += 1
        else:
            rest_exp += exp
            rest_obs += obs
    if rest_exp > 0:
        keep_stat += (rest_obs - rest_exp) ** 2 / rest_exp
        cells += 1
    dof = max(cells - 1, 1)
    z = (keep_stat - dof) / math.sqrt(2.0 * dof)
    return keep_stat, dof, z


def top_class_z(expected, observed, n_samples):
    """z-score of the most probable class's observed frequency."""
    key = max(expected, key=expected.get)
    p = expected[key]
    obs = observed.get(key, 0)
    sigma = math.sqrt(n_samples * p * (1.0 - p))
    return abs(obs - n_samples * p) / max(sigma, 1e-12)


# ---------------------------------------------------------------------------
# gradient-check helper


def directional_fd(loss, flat, direction, h=1e-6):
    """Central finite difference of ``loss`` along ``direction`` at ``flat``."""
    up = loss(flat + h * direction)
    dn = loss(flat - h * direction)
    return (up - dn) / (2.0 * h)


# ---------------------------------------------------------------------------
# trained checkpoints shared across test modules (expensive; train once)


@pytest.fixture(scope="session")
def tsp_ckpt_t5():
    cfg = mh.TrainConfig(problem="tsp", steps=100, n=20, T=5, seed=42)
    return mh.train(cfg)


@pytest.fixture(scope="session")
def tsp_ckpt_t0():
    cfg = mh.TrainConfig(problem="tsp", steps=100, n=20, T=0, seed=42)
    return mh.train(cfg)


@pytest.fixture(scope="session")
def mis_ckpt():
    cfg = mh.TrainConfig(problem="mis", steps=100, n_lo=25, n_hi=35, p=0.15,
                         T=5, seed=42)
    return mh.train(cfg)


@pytest.fixture(scope="session")
def tsp_holdout():
    """32 held-out tour instances with exact references."""
    insts = mh.gen_tsp_uniform(20, 32, seed=4242)
    refs = [mh.held_karp(i).objective for i in insts]
    return insts, np.array(refs)


@pytest.fixture(scope="session")
def mis_holdout():
    """32 held-out graphs with proven optimal set sizes."""
    insts = mh.gen_er(25, 35, 0.15, 32, seed=4242)
    results = [mh.exact_mis(i) for i in insts]
    assert all(r.proven for r in results)
    return insts, np.array([r.objective for r in results])
