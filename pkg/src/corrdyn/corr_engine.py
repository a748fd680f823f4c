"""Per-window standardisation, equal-time correlation and eigendecomposition.

Windows are standardised with the population standard deviation (divide by
``T``), which makes ``C = G G^T / T`` carry an exact unit diagonal and hence
``trace(C) = N`` in every window.

Eigenvectors are sign-fixed so that the component with the largest magnitude
is positive (first such component on ties). Inside a degenerate eigenvalue
cluster any orthonormal basis is returned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConvergenceError, DataError, ZeroVarianceError
from .ingest import ReturnsPanel

# Relative threshold below which a window's standard deviation counts as zero.
_ZERO_SD_RTOL = 1e-12


@dataclass(frozen=True)
class WindowConfig:
    """Sliding window of ``length`` observations, advanced by ``stride``."""

    length: int
    stride: int = 1

    def __post_init__(self):
        if int(self.length) != self.length or self.length < 2:
            raise ValueError(f"window length must be an integer >= 2, got {self.length}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError(f"stride must be an integer >= 1, got {self.stride}")

    def starts(self, n_observations: int) -> np.ndarray:
        """Window start indices ``0, stride, ..., <= L - T``."""
        if n_observations < self.length:
            raise DataError(
                f"panel length {n_observations} shorter than window length {self.length}"
            )
        return np.arange(0, n_observations - self.length + 1, self.stride, dtype=np.int64)

    def q_ratio(self, n_assets: int) -> float:
        return self.length / n_assets


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric, unit-diagonal correlation matrix with asset labels."""

    values: np.ndarray
    assets: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.array(self.values, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DataError(f"correlation matrix must be square, got shape {c.shape}")
        n = c.shape[0]
        assets = tuple(self.assets) or tuple(f"A{i:03d}" for i in range(n))
        if len(assets) != n:
            raise DataError(f"{len(assets)} asset labels for a {n}x{n} matrix")
        if not np.all(np.isfinite(c)):
            raise DataError("correlation matrix has non-finite entries")
        if np.max(np.abs(c - c.T), initial=0.0) > 1e-12:
            raise DataError("correlation matrix is not symmetric")
        if np.any(np.abs(c) > 1.0 + 1e-12):
            raise DataError("correlation entries outside [-1, 1]")
        if np.max(np.abs(np.diag(c) - 1.0), initial=0.0) > 1e-12:
            raise DataError("correlation matrix diagonal is not 1")
        c = 0.5 * (c + c.T)
        np.fill_diagonal(c, 1.0)
        c.setflags(write=False)
        object.__setattr__(self, "values", c)
        object.__setattr__(self, "assets", assets)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def mean_off_diagonal(self) -> float:
        n = self.n
        if n < 2:
            return float("nan")
        return float((self.values.sum() - n) / (n * (n - 1)))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues; ``eigenvectors[:, k]`` pairs with ``eigenvalues[k]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def largest(self) -> float:
        return float(self.eigenvalues[-1])


@dataclass(frozen=True, eq=False)
class SpectrumSeries:
    """Eigenvalues (and optionally eigenvectors / IPR) per window position.

    ``eigenvalues[w]`` is the ascending spectrum of the window starting at
    observation ``window_starts[w]``; ``eigenvectors`` has shape ``(W, N, N)``
    with column ``k`` of each matrix paired with eigenvalue ``k``.
    """

    window_starts: np.ndarray
    eigenvalues: np.ndarray
    assets: tuple[str, ...] = ()
    window_length: int | None = None
    n_observations: int | None = None
    eigenvectors: np.ndarray | None = None
    ipr: np.ndarray | None = field(default=None)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        starts = np.asarray(self.window_starts, dtype=np.int64)
        if lam.ndim != 2 or lam.shape[0] != starts.shape[0]:
            raise DataError("eigenvalues must be (W, N) with one row per window start")
        n = lam.shape[1]
        if np.any(np.diff(lam, axis=1) < 0):
            raise DataError("eigenvalue rows must be ascending")
        if np.any(np.abs(lam.sum(axis=1) - n) > 1e-8 * n):
            raise DataError("eigenvalue rows must sum to N (trace conservation)")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "window_starts", starts)
        object.__setattr__(self, "assets", tuple(self.assets))

    @property
    def n_windows(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_assets(self) -> int:
        return self.eigenvalues.shape[1]

    def spectrum(self, w: int) -> Spectrum:
        if self.eigenvectors is None:
            raise ValueError("series was computed without eigenvectors")
        return Spectrum(self.eigenvalues[w], self.eigenvectors[w])


# ---------------------------------------------------------------------------
# single-window operations
# ---------------------------------------------------------------------------

def _zero_sd(mean: np.ndarray, sd: np.ndarray) -> np.ndarray:
    return sd <= _ZERO_SD_RTOL * np.abs(mean)


def normalize_window(returns: np.ndarray, assets: Sequence[str] | None = None,
                     window: int | None = None) -> np.ndarray:
    """Rows shifted to mean 0 and scaled to population std 1.

    ``assets`` and ``window`` only label the error raised for a constant row.
    """
    x = np.asarray(returns, dtype=float)
    if x.ndim != 2:
        raise DataError("expected an N x T matrix")
    mean = x.mean(axis=1, keepdims=True)
    dev = x - mean
    sd = np.sqrt((dev * dev).mean(axis=1, keepdims=True))
    bad = np.flatnonzero(_zero_sd(mean[:, 0], sd[:, 0]))
    if bad.size:
        i = int(bad[0])
        name = assets[i] if assets is not None else f"row {i}"
        where = f" in window {window}" if window is not None else ""
        raise ZeroVarianceError(f"zero variance for asset {name}{where}",
                                asset=name, window=window)
    return dev / sd


def correlation_matrix(g: np.ndarray, assets: Sequence[str] = ()) -> CorrelationMatrix:
    """``G G^T / T`` of a row-standardised matrix, symmetrised, diagonal set to 1."""
    g = np.asarray(g, dtype=float)
    c = g @ g.T / g.shape[1]
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    # rounding can push |C_ij| a hair past 1 for perfectly (anti)correlated rows
    np.clip(c, -1.0, 1.0, out=c)
    return CorrelationMatrix(c, tuple(assets))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each eigenvector so its largest-magnitude component is positive."""
    idx = np.argmax(np.abs(vectors), axis=-2)
    picked = np.take_along_axis(vectors, idx[..., None, :], axis=-2)
    signs = np.where(picked < 0, -1.0, 1.0)
    return vectors * signs


def _eigh(c: np.ndarray, first_window: int | None = None):
    try:
        lam, vec = np.linalg.eigh(c)
    except np.linalg.LinAlgError as exc:
        if c.ndim == 3 and first_window is not None:
            # locate the failing window
            for k in range(c.shape[0]):
                try:
                    np.linalg.eigh(c[k])
                except np.linalg.LinAlgError:
                    raise ConvergenceError(
                        f"eigensolver did not converge in window {first_window + k}",
                        window=first_window + k) from exc
        raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc
    return lam, _fix_signs(vec)


def eigendecompose(c: CorrelationMatrix | np.ndarray) -> Spectrum:
    """Full symmetric eigendecomposition, ascending, with sign-fixed vectors."""
    values = c.values if isinstance(c, CorrelationMatrix) else np.asarray(c, dtype=float)
    values = 0.5 * (values + values.T)
    lam, vec = _eigh(values)
    return Spectrum(lam, vec)


# ---------------------------------------------------------------------------
# sliding windows
# ---------------------------------------------------------------------------

def _check_window_variance(x: np.ndarray, starts: np.ndarray, length: int,
                           assets: Sequence[str]) -> None:
    win = np.lib.stride_tricks.sliding_window_view(x, length, axis=1)[:, starts, :]
    mean = win.mean(axis=2)
    dev = win - mean[..., None]
    sd = np.sqrt((dev * dev).mean(axis=2))
    bad = np.argwhere(_zero_sd(mean, sd))
    if bad.size:
        # report the earliest window, then the first asset within it
        i, w = bad[np.lexsort((bad[:, 0], bad[:, 1]))[0]]
        start = int(starts[w])
        raise ZeroVarianceError(
            f"zero variance for asset {assets[i]} in window starting at {start}",
            asset=assets[i], window=start)


def window_correlation_stack(x: np.ndarray, starts: np.ndarray, length: int,
                             assets: Sequence[str]) -> np.ndarray:
    """Correlation matrices for the given window starts, shape ``(W, N, N)``."""
    x = np.ascontiguousarray(x, dtype=float)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    _check_window_variance(x, starts, length, assets)
    return _kernels.window_correlations(x, starts, length)


def sliding_spectra(panel: ReturnsPanel, cfg: WindowConfig, *,
                    keep_vectors: bool = False, compute_ipr: bool = False,
                    chunk_size: int = 256) -> SpectrumSeries:
    """Spectrum of every window ``[s, s+T)`` for ``s = 0, stride, ..., L-T``.

    Windows are processed in fixed-size chunks; no state crosses windows, so
    the output does not depend on chunking or on kernel thread count.
    """
    from .ipr import ipr_columns

    x = panel.returns
    n = panel.n_assets
    starts = cfg.starts(panel.length)
    w_total = starts.shape[0]
    eigenvalues = np.empty((w_total, n))
    vectors = np.empty((w_total, n, n)) if keep_vectors else None
    iprs = np.empty((w_total, n)) if compute_ipr else None
    for lo in range(0, w_total, chunk_size):
        hi = min(lo + chunk_size, w_total)
        c = window_correlation_stack(x, starts[lo:hi], cfg.length, panel.assets)
        lam, vec = _eigh(c, first_window=lo)
        eigenvalues[lo:hi] = lam
        if vectors is not None:
            vectors[lo:hi] = vec
        if iprs is not None:
            iprs[lo:hi] = ipr_columns(vec)
    return SpectrumSeries(
        window_starts=starts,
        eigenvalues=eigenvalues,
        assets=panel.assets,
        window_length=cfg.length,
        n_observations=panel.length,
        eigenvectors=vectors,
        ipr=iprs,
    )


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def write_spectrum_csv(series: SpectrumSeries, path: str | Path) -> None:
    """One row per window: ``window_start, lambda_1 ... lambda_N``."""
    n = series.n_assets
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_start", *(f"lambda_{k + 1}" for k in range(n))])
        for s, row in zip(series.window_starts, series.eigenvalues):
            w.writerow([int(s), *(repr(float(v)) for v in row)])


def read_spectrum_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_spectrum_csv`: ``(window_starts, eigenvalues)``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    starts = np.array([int(r[0]) for r in body], dtype=np.int64)
    lam = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
    return starts, lam.reshape(len(body), len(rows[0]) - 1)


def write_eigenvectors(series: SpectrumSeries, path: str | Path) -> None:
    """Eigenvector stack ``(W, N, N)`` as a ``.npy`` file."""
    if series.eigenvectors is None:
        raise ValueError("series was computed without eigenvectors")
    with Path(path).open("wb") as fh:
        np.save(fh, series.eigenvectors, allow_pickle=False)
