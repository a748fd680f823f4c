"""Independent reference computations used to freeze expected values.

Nothing here calls into corrdyn: eigenvalues come from a cyclic Jacobi
rotation solver, correlations from explicit double loops over pairs.
"""

from __future__ import annotations

import math

import numpy as np


def jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Cyclic Jacobi eigenvalue algorithm; returns ascending values and vectors."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.abs(a).max(), 1.0)
    for _ in range(max_sweeps):
        off = math.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi did not converge")
    lam = np.diag(a).copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], v[:, order]


def brute_correlation(x: np.ndarray) -> np.ndarray:
    """Pearson correlation by explicit loops (population moments)."""
    n, t = x.shape
    rows = [list(map(float, r)) for r in x]
    means = [sum(r) / t for r in rows]
    sds = [math.sqrt(sum((v - m) ** 2 for v in r) / t) for r, m in zip(rows, means)]
    c = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            acc = sum((rows[i][k] - means[i]) * (rows[j][k] - means[j]) for k in range(t))
            c[i, j] = acc / t / (sds[i] * sds[j])
    return c


def brute_window_sums(r, length: int, stride: int = 1) -> list[float]:
    out = []
    s = 0
    while s + length <= len(r):
        out.append(math.fsum(float(v) for v in r[s:s + length]))
        s += stride
    return out

