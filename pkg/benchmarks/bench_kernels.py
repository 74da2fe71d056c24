#!/usr/bin/env python3
"""Benchmark the optimizer's backward-induction sweep: numba vs pure numpy.

Runs one sweep at a few grid resolutions in both backends, checks that the
resulting tables agree, and times a full depth-table build at the default
configuration.

Usage:
    python benchmarks/bench_kernels.py [--full]

The library itself selects its backend via ENTGATES_BACKEND (auto|numba|numpy);
this script imports both kernel modules directly.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from entgates._backend import HAS_NUMBA
from entgates.optimizer import EntanglementOptimizer, OptimizerConfig
from entgates import _kernels_numpy as knp


def time_sweep(fn, opt, fnext, repeats=3):
    g = opt.betas
    args = (fnext, opt.a_grid, opt.x0, opt.hx, opt.config.memo_alpha_min,
            g.lnb, g.eb, g.tb, g.t2b, g.s2b, g.c2b)
    fn(*args)  # warm up (JIT compile for the numba path)
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true",
                    help="also time the default-resolution table build")
    args = ap.parse_args()

    if HAS_NUMBA:
        from entgates import _kernels_numba as knb
    else:
        knb = None
        print("numba not importable; benchmarking the numpy path only")

    print(f"{'grid':>22} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max |dF|':>10}")
    for ppd, nb in ((256, 256), (512, 512), (2048, 1024)):
        cfg = OptimizerConfig(memo_points_per_decade=ppd, beta_grid=nb)
        opt = EntanglementOptimizer(cfg)
        fnext = np.ones(opt.a_grid.shape[0])
        t_np, (f_np, _) = time_sweep(knp.backward_sweep, opt, fnext)
        label = f"{opt.a_grid.shape[0]} nodes x {nb} betas"
        if knb is None:
            print(f"{label:>22} {t_np*1e3:9.1f}ms {'-':>10} {'-':>8} {'-':>10}")
            continue
        t_nb, (f_nb, _) = time_sweep(knb.backward_sweep, opt, fnext)
        dmax = float(np.max(np.abs(f_np - f_nb)))
        print(f"{label:>22} {t_np*1e3:9.1f}ms {t_nb*1e3:9.1f}ms "
              f"{t_np/t_nb:7.1f}x {dmax:10.2e}")

    if args.full:
        for backend in (["numba"] if HAS_NUMBA else []) + ["numpy"]:
            opt = EntanglementOptimizer(OptimizerConfig())
            opt.backend = backend
            t0 = time.perf_counter()
            opt.tables()
            dt = time.perf_counter() - t0
            a = np.pi / 2 ** 20
            rate = opt.optimize_schedule(a).expected_ebits / a
            print(f"full table build [{backend}]: {dt:6.1f}s  "
                  f"small-angle rate {rate:.5f}")


if __name__ == "__main__":
    main()
