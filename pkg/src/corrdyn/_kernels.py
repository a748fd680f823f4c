"""Hot loops: batched window correlations and Cholesky factorisation.

Every kernel has a pure-numpy implementation and, when numba is importable,
an ``@njit`` twin. The active pair is chosen once at import time; setting
``CORRDYN_DISABLE_NUMBA=1`` forces the numpy path. Both variants are always
importable under their explicit names so tests and benchmarks can compare them.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_TRUTHY = {"1", "true", "yes", "on"}

NUMBA_DISABLED = os.environ.get("CORRDYN_DISABLE_NUMBA", "").strip().lower() in _TRUTHY

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via CORRDYN_DISABLE_NUMBA")
    # try OpenMP before TBB; an outdated TBB only produces warnings
    os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")
    import numba
    from numba import prange

    HAVE_NUMBA = True
except ImportError:
    numba = None
    prange = range
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def window_correlations_numpy(x: np.ndarray, starts: np.ndarray, length: int) -> np.ndarray:
    """Correlation matrices of ``x[:, s:s+length]`` for each ``s`` in ``starts``.

    Rows are standardised with the population standard deviation, so the
    result has an exact unit diagonal. Returns shape ``(len(starts), N, N)``.
    Callers must reject zero-variance rows beforehand.
    """
    n = x.shape[0]
    win = sliding_window_view(x, length, axis=1)[:, starts, :]
    win = np.ascontiguousarray(np.moveaxis(win, 1, 0))  # (W, N, T)
    dev = win - win.mean(axis=2, keepdims=True)
    sd = np.sqrt((dev * dev).mean(axis=2, keepdims=True))
    g = dev / sd
    c = np.matmul(g, g.transpose(0, 2, 1)) / length
    c = 0.5 * (c + c.transpose(0, 2, 1))
    idx = np.arange(n)
    c[:, idx, idx] = 1.0
    return c


def cholesky_numpy(a: np.ndarray) -> tuple[np.ndarray, int]:
    """Lower Cholesky factor of ``a``; returns ``(L, failed_pivot)``.

    ``failed_pivot`` is -1 on success, otherwise the 0-based index of the
    first non-positive pivot (``L`` is then only partially filled).
    """
    n = a.shape[0]
    lower = np.zeros((n, n))
    for j in range(n):
        row = lower[j, :j]
        d = a[j, j] - row @ row
        if not d > 0.0:
            return lower, j
        piv = np.sqrt(d)
        lower[j, j] = piv
        if j + 1 < n:
            lower[j + 1:, j] = (a[j + 1:, j] - lower[j + 1:, :j] @ row) / piv
    return lower, -1


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    # reassoc lets LLVM vectorise the dot-product reductions; results stay
    # identical run to run since each window is reduced by one thread
    @numba.njit(parallel=True, cache=True, nogil=True, fastmath={"reassoc", "contract"})
    def window_correlations_numba(x, starts, length):
        n = x.shape[0]
        w = starts.shape[0]
        out = np.empty((w, n, n))
        # one window per iteration; no state shared across windows
        for k in prange(w):
            s = starts[k]
            g = np.empty((n, length))
            for i in range(n):
                m = 0.0
                for t in range(length):
                    m += x[i, s + t]
                m /= length
                v = 0.0
                for t in range(length):
                    d = x[i, s + t] - m
                    g[i, t] = d
                    v += d * d
                sd = np.sqrt(v / length)
                for t in range(length):
                    g[i, t] /= sd
            for i in range(n):
                out[k, i, i] = 1.0
                for j in range(i):
                    acc = 0.0
                    for t in range(length):
                        acc += g[i, t] * g[j, t]
                    c = acc / length
                    out[k, i, j] = c
                    out[k, j, i] = c
        return out

    @numba.njit(cache=True, nogil=True)
    def cholesky_numba(a):
        n = a.shape[0]
        lower = np.zeros((n, n))
        for j in range(n):
            d = a[j, j]
            for k in range(j):
                d -= lower[j, k] * lower[j, k]
            if not d > 0.0:
                return lower, j
            piv = np.sqrt(d)
            lower[j, j] = piv
            for i in range(j + 1, n):
                acc = a[i, j]
                for k in range(j):
                    acc -= lower[i, k] * lower[j, k]
                lower[i, j] = acc / piv
        return lower, -1

    BACKEND = "numba"
    window_correlations = window_correlations_numba
    cholesky_lower = cholesky_numba
else:
    window_correlations_numba = None
    cholesky_numba = None
    BACKEND = "numpy"
    window_correlations = window_correlations_numpy
    cholesky_lower = cholesky_numpy
