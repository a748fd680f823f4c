"""Inverse participation ratio of eigenvectors.

For a unit vector ``v`` the IPR is ``sum(v**4)``: 1/N for a fully spread
vector, 1 for a vector on a single component. Its reciprocal is the effective
number of contributing components.

Within a degenerate eigenvalue cluster the IPR depends on which orthonormal
basis the solver happened to return, so only non-degenerate eigenvectors
carry meaningful IPR values (e.g. the market vector of an exact one-factor
matrix, but not the vectors of its (N-1)-fold bulk).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import DataError

if TYPE_CHECKING:
    from .corr_engine import Spectrum


@dataclass(frozen=True, eq=False)
class IprProfile:
    """IPR per eigenvector, in ascending-eigenvalue order."""

    values: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]


def ipr(v: np.ndarray) -> float:
    """IPR of a single unit-norm vector."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-8:
        raise DataError(f"IPR needs a unit vector, got norm {norm:.12g}")
    v2 = v * v
    return float(v2 @ v2)


def ipr_columns(vectors: np.ndarray) -> np.ndarray:
    """IPR of every column; works on ``(N, N)`` or stacked ``(W, N, N)`` input."""
    v2 = np.square(vectors)
    return np.sum(v2 * v2, axis=-2)


def ipr_profile(spectrum: Spectrum) -> IprProfile:
    vec = spectrum.eigenvectors
    norms = np.linalg.norm(vec, axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise DataError("spectrum eigenvectors are not unit norm")
    return IprProfile(values=ipr_columns(vec), eigenvalues=np.asarray(spectrum.eigenvalues))


def bulk_median(profile: IprProfile, exclude_low: int = 1, exclude_high: int = 2) -> float:
    """Median IPR with the ``exclude_low`` smallest and ``exclude_high``
    largest eigenvectors left out."""
    n = profile.n
    if exclude_low + exclude_high >= n:
        raise ValueError("nothing left in the bulk after exclusions")
    return float(np.median(profile.values[exclude_low:n - exclude_high]))


def write_profile_csv(profile: IprProfile, path: str | Path) -> None:
    """Columns ``eigen_index, eigenvalue, ipr``; ``eigen_index`` starts at 1."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eigen_index", "eigenvalue", "ipr"])
        for k, (lam, val) in enumerate(zip(profile.eigenvalues, profile.values)):
            w.writerow([k + 1, repr(float(lam)), repr(float(val))])
