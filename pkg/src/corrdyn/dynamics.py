"""Eigenvalue time series: normalisation in SDU, band averages, partitions.

A normalised eigenvalue is expressed in standard deviation units (SDU):
``(lambda_i(t) - mean_ref) / std_ref`` with mean and population std taken
over a reference range of windows (the full series by default).

Window index returns are computed on overlapping windows when the stride is
smaller than the window, so partition means average non-independent samples.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .corr_engine import SpectrumSeries, WindowConfig
from .errors import DataError, ZeroVarianceError
from .ingest import ReturnsPanel

__all__ = [
    "SpectrumSeries", "NormalizedSeries", "PartitionCell", "PartitionReport",
    "normalize_series", "band_average", "window_index_return", "equal_weighted_index",
    "partition_by_sdu", "partition_report", "export_heatmap", "read_heatmap",
    "write_series_csv",
]

_ZERO_SD_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class NormalizedSeries:
    """``values[w, i]`` is eigenvalue ``i`` of window ``w`` in SDU.

    ``reference`` is the half-open window-row range ``[start, end)`` whose
    mean and standard deviation were used.
    """

    values: np.ndarray
    reference: tuple[int, int]
    window_starts: np.ndarray

    @property
    def n_windows(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    @property
    def largest(self) -> np.ndarray:
        return self.values[:, -1]


def normalize_series(series: SpectrumSeries | np.ndarray,
                     reference: tuple[int, int] | None = None) -> NormalizedSeries:
    if isinstance(series, SpectrumSeries):
        lam = series.eigenvalues
        starts = series.window_starts
    else:
        lam = np.asarray(series, dtype=float)
        if lam.ndim == 1:
            lam = lam[:, None]
        starts = np.arange(lam.shape[0], dtype=np.int64)
    w_total = lam.shape[0]
    lo, hi = reference if reference is not None else (0, w_total)
    if not 0 <= lo < hi <= w_total:
        raise ValueError(f"reference range [{lo}, {hi}) not inside [0, {w_total})")
    if hi - lo < 2:
        raise ValueError("reference range must contain at least 2 windows")
    ref = lam[lo:hi]
    mean = ref.mean(axis=0)
    dev = ref - mean
    sd = np.sqrt((dev * dev).mean(axis=0))
    bad = np.flatnonzero(sd <= _ZERO_SD_RTOL * np.maximum(np.abs(mean), 1e-300))
    if bad.size:
        i = int(bad[0])
        raise ZeroVarianceError(
            f"eigenvalue {i + 1} has zero standard deviation over reference [{lo}, {hi})",
            eigen_index=i)
    return NormalizedSeries(values=(lam - mean) / sd, reference=(lo, hi),
                            window_starts=np.asarray(starts, dtype=np.int64))


def band_average(norm: NormalizedSeries, k: int) -> np.ndarray:
    """Per-window mean of the ``k`` smallest normalised eigenvalues."""
    n = norm.n_assets
    if not 1 <= k <= n:
        raise ValueError(f"band size k={k} outside [1, {n}]")
    return norm.values[:, :k].mean(axis=1)


def equal_weighted_index(panel: ReturnsPanel) -> np.ndarray:
    """Cross-sectional mean return per period."""
    return panel.returns.mean(axis=0)


def window_index_return(index_returns: np.ndarray, cfg: WindowConfig, *,
                        kind: Literal["log", "simple"] = "log",
                        expected_length: int | None = None) -> np.ndarray:
    """Index return over each window ``[s, s+T)``, as a fraction.

    ``kind="log"`` sums log returns (log of the gross return);
    ``kind="simple"`` compounds simple returns, ``prod(1 + r) - 1``.
    """
    r = np.asarray(index_returns, dtype=float)
    if r.ndim != 1:
        raise DataError("index returns must be one-dimensional")
    if expected_length is not None and r.shape[0] != expected_length:
        raise DataError(
            f"index has {r.shape[0]} returns but the panel has {expected_length} observations"
        )
    starts = cfg.starts(r.shape[0])
    win = sliding_window_view(r, cfg.length)[starts]
    if kind == "log":
        return win.sum(axis=1)
    if kind == "simple":
        return np.prod(1.0 + win, axis=1) - 1.0
    raise ValueError(f"unknown return kind {kind!r}")


@dataclass(frozen=True)
class PartitionCell:
    statistic: str
    side: Literal["below", "above"]
    threshold: float
    count: int
    mean_return: float | None

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "side": self.side,
            "threshold": self.threshold,
            "count": self.count,
            "mean_return": self.mean_return,
        }


@dataclass(frozen=True)
class PartitionReport:
    cells: tuple[PartitionCell, ...]
    band_size: int | None = None

    def cell(self, statistic: str, side: str) -> PartitionCell:
        for c in self.cells:
            if c.statistic == statistic and c.side == side:
                return c
        raise KeyError((statistic, side))

    def signs(self) -> tuple[int | None, ...]:
        """Sign of each cell's mean return (None for empty cells)."""
        return tuple(None if c.mean_return is None else int(np.sign(c.mean_return))
                     for c in self.cells)

    def to_json(self) -> str:
        doc = {"band_size": self.band_size, "cells": [c.as_dict() for c in self.cells]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        """Table layout: eigenvalues, no_std, count, index_return."""
        labels = {"largest": "Large"}
        if self.band_size is not None:
            labels["mean_smallest_k"] = f"Average {self.band_size} Smallest"
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eigenvalues", "no_std", "count", "index_return"])
            for c in self.cells:
                bound = f"<-{c.threshold:g}" if c.side == "below" else f">{c.threshold:g}"
                ret = "null" if c.mean_return is None else repr(c.mean_return)
                w.writerow([labels.get(c.statistic, c.statistic), bound, c.count, ret])


def partition_by_sdu(stat: np.ndarray, index_returns: np.ndarray, threshold: float = 1.0,
                     *, name: str = "largest") -> tuple[PartitionCell, PartitionCell]:
    """Mean window return where ``stat < -threshold`` and where ``stat > threshold``.

    An empty side has ``count == 0`` and ``mean_return is None``.
    """
    stat = np.asarray(stat, dtype=float)
    r = np.asarray(index_returns, dtype=float)
    if stat.shape != r.shape or stat.ndim != 1:
        raise DataError(f"statistic {stat.shape} and returns {r.shape} must be equal-length 1-D")
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    cells = []
    for side, mask in (("below", stat < -threshold), ("above", stat > threshold)):
        count = int(mask.sum())
        mean = float(r[mask].mean()) if count else None
        if mean is not None and not math.isfinite(mean):
            raise DataError("non-finite mean window return")
        cells.append(PartitionCell(name, side, float(threshold), count, mean))
    return cells[0], cells[1]


def partition_report(norm: NormalizedSeries, window_returns: np.ndarray, *,
                     band: int = 40, threshold: float = 1.0) -> PartitionReport:
    """Four-cell drawdown/drawup table: largest eigenvalue and the band
    average of the ``band`` smallest, each split below/above the threshold."""
    large = partition_by_sdu(norm.largest, window_returns, threshold, name="largest")
    small = partition_by_sdu(band_average(norm, band), window_returns, threshold,
                             name="mean_smallest_k")
    return PartitionReport(cells=(*large, *small), band_size=band)


def write_series_csv(path: str | Path, window_starts: np.ndarray,
                     columns: dict[str, np.ndarray]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_start", *columns])
        for row in zip(window_starts, *columns.values()):
            w.writerow([int(row[0]), *(repr(float(v)) for v in row[1:])])


def export_heatmap(norm: NormalizedSeries, path: str | Path) -> None:
    """Write ``window_start`` plus one SDU column per eigenvalue."""
    cols = {f"lambda_{k + 1}": norm.values[:, k] for k in range(norm.n_assets)}
    write_series_csv(path, norm.window_starts, cols)


def read_heatmap(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    starts = np.array([int(r[0]) for r in body], dtype=np.int64)
    values = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
    return starts, values.reshape(len(body), len(rows[0]) - 1)
