#!/usr/bin/env python3
"""Time every hot kernel against its pure-Python body.

The package runs the same kernel source either compiled (numba, the
default) or as plain Python/NumPy (``METAHEAT_JIT=0``).  This script keeps
the compiled dispatchers and times each one against its uncompiled
``py_func`` twin on a medium workload, printing a per-kernel table.

Run:  python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from metaheat import backend, kernels
from metaheat.instances import gen_er, gen_tsp_uniform, rng_for


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5,
                    help="timing repetitions for the compiled path")
    args = ap.parse_args()
    if not backend.JIT_ENABLED:
        raise SystemExit("nothing to compare: the JIT backend is disabled "
                         "(unset METAHEAT_JIT or set it to 1)")

    tsp = gen_tsp_uniform(100, 1, seed=1, k=16)[0]
    big = gen_tsp_uniform(300, 1, seed=2, k=20)[0]
    mis = gen_er(300, 300, 0.02, 1, seed=3)[0]
    indptr, indices = mis.csr()
    rng = rng_for(17)

    grid = rng.normal(size=(tsp.n, tsp.deg))
    starts = rng.integers(0, tsp.n, size=64).astype(np.int32)
    unif = rng.random((64, tsp.n))
    tours, _, costs = kernels.tsp_sample_batch(tsp.coords, tsp.nbr, grid, 1.0,
                                               starts, unif)
    weights = (costs - costs.mean()) / (len(costs) - 1)

    big_grid = rng.normal(size=(big.n, big.deg))
    theta_mis = rng.normal(size=mis.n)
    unif_mis = rng.random((64, mis.n))
    orders, sizes, _ = kernels.mis_sample_batch(indptr, indices, theta_mis,
                                                1.0, unif_mis)
    wmis = np.linspace(-1.0, 1.0, 64)

    hk = gen_tsp_uniform(12, 1, seed=4)[0]
    diff = hk.coords[:, None, :] - hk.coords[None, :, :]
    hk_dist = np.sqrt((diff ** 2).sum(-1))

    perm2000 = rng.permutation(2000).astype(np.int32)
    coords2000 = rng.random((2000, 2))
    perm60 = rng.permutation(60).astype(np.int32)
    coords60 = rng.random((60, 2))

    m = min(5, tsp.deg)
    cand = np.empty((tsp.n, m), dtype=np.int32)
    cand_cum = np.empty((tsp.n, m))
    for u in range(tsp.n):
        order = np.argsort(-grid[u], kind="stable")[:m]
        cand[u] = tsp.nbr[u, order]
        w = np.exp(grid[u, order] - grid[u, order].max())
        cand_cum[u] = np.cumsum(w / w.sum())
    cnt = np.full(tsp.n, m, dtype=np.int32)
    seed_tour, _ = kernels.tsp_greedy(tsp.coords, tsp.nbr, grid, 0)
    unif_mcts = rng.random((2000, 3))

    cases = [
        ("tour_len", "n=2000",
         lambda k: k(coords2000, perm2000)),
        ("tsp_greedy", "n=300 deg=20",
         lambda k: k(big.coords, big.nbr, big_grid, 0)),
        ("tsp_sample_batch", "n=100 K=64",
         lambda k: k(tsp.coords, tsp.nbr, grid, 1.0, starts, unif)),
        ("tsp_logq_grad", "n=100 K=64",
         lambda k: k(tsp.nbr, grid, 1.0, tours, weights,
                     np.zeros_like(grid))),
        ("two_opt_best", "n=60",
         lambda k: k(coords60, perm60.copy(), 10 ** 9)),
        ("mcts_improve", "n=100 budget=2000",
         lambda k: k(tsp.coords, seed_tour.copy(), cand, cand_cum, cnt,
                     unif_mcts, 1.0, 5000)),
        ("held_karp_dp", "n=12",
         lambda k: k(hk_dist)),
        ("mis_greedy", "n=300",
         lambda k: k(indptr, indices, theta_mis)),
        ("mis_sample_batch", "n=300 K=64",
         lambda k: k(indptr, indices, theta_mis, 1.0, unif_mis)),
        ("mis_logq_grad", "n=300 K=64",
         lambda k: k(indptr, indices, theta_mis, 1.0, orders, sizes, wmis,
                     np.zeros(mis.n))),
    ]

    print(f"{'kernel':<18} {'workload':<18} {'jit ms':>10} {'pure ms':>12} "
          f"{'speedup':>9}")
    print("-" * 72)
    for name, workload, call in cases:
        kern = getattr(kernels, name)
        pure = backend.py_func(kern)
        call(kern)  # compile outside the timer
        t_jit = best_of(lambda: call(kern), args.repeat)
        t_py = best_of(lambda: call(pure), max(1, args.repeat // 2))
        ratio = t_py / t_jit if t_jit > 0 else float("inf")
        print(f"{name:<18} {workload:<18} {t_jit:>10.3f} {t_py:>12.3f} "
              f"{ratio:>8.1f}x")


if __name__ == "__main__":
    main()
