#!/usr/bin/env python3
"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--assets N] [--length L] [--window T] [--repeat R]

Reports best-of-R wall time per kernel and the max absolute difference
between the two implementations. The first numba call (compilation or cache
load) is excluded.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from corrdyn import _kernels
from corrdyn.corr_engine import WindowConfig, sliding_spectra
from corrdyn.ingest import ReturnsPanel
from corrdyn.models import one_factor_matrix


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--assets", type=int, default=100)
    p.add_argument("--length", type=int, default=1200)
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    rng = np.random.default_rng(0)
    x = rng.standard_normal((args.assets, args.length))
    starts = WindowConfig(args.window).starts(args.length)
    c = one_factor_matrix(args.assets, 0.3).values

    print(f"active backend: {_kernels.BACKEND}; N={args.assets} L={args.length} "
          f"T={args.window} windows={starts.size}")
    rows = []
    t_np, ref = best_of(lambda: _kernels.window_correlations_numpy(x, starts, args.window),
                        args.repeat)
    rows.append(("window_correlations", "numpy", t_np, 0.0))
    if _kernels.HAVE_NUMBA:
        _kernels.window_correlations_numba(x, starts[:2], args.window)
        t_nb, got = best_of(lambda: _kernels.window_correlations_numba(x, starts, args.window),
                            args.repeat)
        rows.append(("window_correlations", "numba", t_nb, float(np.max(np.abs(got - ref)))))

    t_np, (ref, _) = best_of(lambda: _kernels.cholesky_numpy(c), args.repeat)
    rows.append(("cholesky", "numpy", t_np, 0.0))
    if _kernels.HAVE_NUMBA:
        _kernels.cholesky_numba(c)
        t_nb, (got, _) = best_of(lambda: _kernels.cholesky_numba(c), args.repeat)
        rows.append(("cholesky", "numba", t_nb, float(np.max(np.abs(got - ref)))))

    panel = ReturnsPanel([f"A{i}" for i in range(args.assets)],
                         [str(t) for t in range(args.length)], x)
    t_full, _ = best_of(lambda: sliding_spectra(panel, WindowConfig(args.window)), 1)
    rows.append(("sliding_spectra (end to end)", _kernels.BACKEND, t_full, 0.0))

    print(f"{'kernel':<30}{'impl':<8}{'seconds':>10}{'max |diff|':>14}")
    for name, impl, sec, diff in rows:
        print(f"{name:<30}{impl:<8}{sec:>10.4f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
