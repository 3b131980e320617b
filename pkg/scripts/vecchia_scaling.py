"""Timing of Vecchia log-likelihood evaluation and of a full fit versus n.

    python scripts/vecchia_scaling.py --sizes 10000 20000 40000 --fit-size 100000
"""
import argparse
import time
import tracemalloc

import numpy as np

from spatialsl.spatial import GPParams, fit_fisher_scoring, vecchia_config, vecchia_loglik


def problem(n, seed=0):
    # random-feature smooth field, so no dense simulation is needed at large n
    r = np.random.default_rng(seed)
    c = r.uniform(size=(n, 2))
    x = r.normal(size=n)
    w = r.normal(size=(50, 2)) * 10
    field = np.sqrt(2 / 50) * np.cos(c @ w.T + r.uniform(0, 2 * np.pi, 50)).sum(axis=1)
    return 1.0 + 2.0 * x + field + 0.5 * r.normal(size=n), np.column_stack([np.ones(n), x]), c


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10_000, 20_000, 40_000])
    ap.add_argument("--k", type=int, default=15)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--fit-size", type=int, default=0, help="also time a full fit at this n")
    a = ap.parse_args()

    p = GPParams([1.0, 2.0], 1.0, 0.25, 0.1)
    y, W, c = problem(500)
    vecchia_loglik(p, y, W, c, vecchia_config(c, a.k))  # jit warm-up

    print(f"{'n':>8} {'setup_s':>9} {'loglik_s':>9}")
    prev = None
    for n in a.sizes:
        y, W, c = problem(n, seed=n)
        t0 = time.perf_counter()
        cfg = vecchia_config(c, a.k)
        setup = time.perf_counter() - t0
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            vecchia_loglik(p, y, W, c, cfg, threads=a.threads)
            best = min(best, time.perf_counter() - t0)
        ratio = f"  x{best / prev:.2f}" if prev else ""
        print(f"{n:>8} {setup:9.2f} {best:9.3f}{ratio}")
        prev = best

    if a.fit_size:
        y, W, c = problem(a.fit_size)
        tracemalloc.start()
        t0 = time.perf_counter()
        fit = fit_fisher_scoring(y, W, c, k=a.k, threads=a.threads)
        el = time.perf_counter() - t0
        peak = tracemalloc.get_traced_memory()[1]
        tracemalloc.stop()
        print(f"\nfit n={a.fit_size}: {el:.1f}s, {fit.iterations} iterations, "
              f"converged={fit.converged}, peak traced memory {peak / 1e6:.0f} MB")
        print(f"sigma2={fit.params.sigma2:.4g} tau2={fit.params.tau2:.4g} phi={fit.params.phi:.4g}")


if __name__ == "__main__":
    main()
