"""Loading price/return panels from CSV and turning prices into returns.

Two CSV layouts are understood (UTF-8, comma separated, ``.`` decimals):

* wide: header ``date,<asset>,<asset>,...``, one row per time label;
* long: header ``date,asset,price``, one row per observation.

Assets are always sorted by identifier. Assets with a missing price anywhere
are dropped with a warning; there is no imputation.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

ReturnKind = Literal["log", "simple"]


def _time_key(labels: Sequence[str]):
    """Sort key for time labels: numeric if every label parses as a number."""
    try:
        values = [float(x) for x in labels]
    except ValueError:
        return list(labels)
    return values


def _check_increasing(times: Sequence[str]) -> None:
    keys = _time_key(times)
    for a, b, ka, kb in zip(times, times[1:], keys, keys[1:]):
        if not ka < kb:
            raise DataError(f"time labels not strictly increasing: {a!r} then {b!r}")


@dataclass(frozen=True, eq=False)
class PricePanel:
    """N assets observed at L+1 strictly increasing time labels."""

    assets: tuple[str, ...]
    times: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "times", tuple(self.times))
        if prices.ndim != 2:
            raise DataError("prices must be a 2-D (assets x times) matrix")
        if prices.shape != (len(self.assets), len(self.times)):
            raise DataError(
                f"prices shape {prices.shape} does not match "
                f"{len(self.assets)} assets x {len(self.times)} times"
            )
        if len(set(self.assets)) != len(self.assets):
            raise DataError("duplicate asset identifiers")
        if not np.all(np.isfinite(prices)):
            raise DataError("non-finite price")
        if np.any(prices <= 0):
            i, t = np.argwhere(prices <= 0)[0]
            raise DataError(
                f"non-positive price {prices[i, t]} for asset {self.assets[i]!r} "
                f"at {self.times[t]!r}"
            )
        _check_increasing(self.times)
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def __eq__(self, other):
        if not isinstance(other, PricePanel):
            return NotImplemented
        return (self.assets == other.assets and self.times == other.times
                and np.array_equal(self.prices, other.prices))


@dataclass(frozen=True, eq=False)
class ReturnsPanel:
    """N x L matrix of finite per-asset returns (dimensionless)."""

    assets: tuple[str, ...]
    times: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=float)
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "times", tuple(str(t) for t in self.times))
        if r.ndim != 2:
            raise DataError("returns must be a 2-D (assets x times) matrix")
        if r.shape[0] != len(self.assets):
            raise DataError(f"{r.shape[0]} return rows for {len(self.assets)} assets")
        if r.shape[1] != len(self.times):
            raise DataError(f"{r.shape[1]} return columns for {len(self.times)} time labels")
        if r.shape[1] < 2:
            raise DataError("a returns panel needs at least 2 observations")
        if len(set(self.assets)) != len(self.assets):
            raise DataError("duplicate asset identifiers")
        if not np.all(np.isfinite(r)):
            raise DataError("non-finite return")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)

    @property
    def n_assets(self) -> int:
        return self.returns.shape[0]

    @property
    def length(self) -> int:
        return self.returns.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ReturnsPanel):
            return NotImplemented
        return (self.assets == other.assets and self.times == other.times
                and np.array_equal(self.returns, other.returns))


def _parse_float(text: str, where: str) -> float:
    text = text.strip()
    if not text:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"unparseable number {text!r} at {where}") from None


def _read_rows(path: Path) -> list[list[str]]:
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows


def _read_wide(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    assets = header[1:]
    if not assets:
        raise DataError(f"{path}: header has no asset columns")
    if len(set(assets)) != len(assets):
        raise DataError(f"{path}: duplicate asset identifiers in header")
    times = []
    values = np.empty((len(assets), len(rows) - 1))
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise DataError(
                f"{path}: ragged row {r + 2} has {len(row)} fields, expected {len(header)}"
            )
        times.append(row[0].strip())
        for i, cell in enumerate(row[1:]):
            values[i, r] = _parse_float(cell, f"{path}:{r + 2}:{assets[i]}")
    if len(set(times)) != len(times):
        raise DataError(f"{path}: duplicate time labels")
    return assets, times, values


def _read_long(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    rows = _read_rows(path)
    header = [h.strip().lower() for h in rows[0]]
    if header != ["date", "asset", "price"]:
        raise DataError(f"{path}: long format needs header date,asset,price; got {rows[0]}")
    cells: dict[tuple[str, str], float] = {}
    for r, row in enumerate(rows[1:]):
        if len(row) != 3:
            raise DataError(f"{path}: ragged row {r + 2} has {len(row)} fields, expected 3")
        t, a, p = row[0].strip(), row[1].strip(), row[2]
        if (t, a) in cells:
            raise DataError(f"{path}: duplicate (time, asset) pair ({t!r}, {a!r})")
        cells[(t, a)] = _parse_float(p, f"{path}:{r + 2}")
    assets = sorted({a for _, a in cells})
    times = list(dict.fromkeys(t for t, _ in cells))
    values = np.full((len(assets), len(times)), np.nan)
    a_pos = {a: i for i, a in enumerate(assets)}
    t_pos = {t: j for j, t in enumerate(times)}
    for (t, a), p in cells.items():
        values[a_pos[a], t_pos[t]] = p
    return assets, times, values


def _sort_and_filter(assets, times, values, path) -> tuple[list[str], list[str], np.ndarray]:
    keys = _time_key(times)
    t_order = sorted(range(len(times)), key=lambda j: keys[j])
    a_order = sorted(range(len(assets)), key=lambda i: assets[i])
    values = values[np.ix_(a_order, t_order)]
    assets = [assets[i] for i in a_order]
    times = [times[j] for j in t_order]
    complete = ~np.isnan(values).any(axis=1)
    if not complete.all():
        dropped = [a for a, ok in zip(assets, complete) if not ok]
        logger.warning("%s: dropping %d asset(s) with missing prices: %s",
                       path, len(dropped), ", ".join(dropped))
        assets = [a for a, ok in zip(assets, complete) if ok]
        values = values[complete]
    if not assets:
        raise DataError(f"{path}: no asset has a complete price history")
    return assets, times, values


def load_prices(path: str | Path, format: Literal["wide", "long"] = "wide") -> PricePanel:
    """Read a price panel from CSV.

    Raises ``FileNotFoundError`` for a missing file and :class:`DataError` for
    non-positive prices, ragged rows or duplicate (time, asset) pairs.
    """
    path = Path(path)
    if format == "wide":
        raw = _read_wide(path)
    elif format == "long":
        raw = _read_long(path)
    else:
        raise ValueError(f"unknown format {format!r}; expected 'wide' or 'long'")
    assets, times, values = _sort_and_filter(*raw, path)
    return PricePanel(assets=assets, times=times, prices=values)


def load_returns(path: str | Path) -> ReturnsPanel:
    """Read a wide-format returns panel (as written by :func:`write_returns`)."""
    path = Path(path)
    assets, times, values = _sort_and_filter(*_read_wide(path), path)
    return ReturnsPanel(assets=assets, times=times, returns=values)


def write_returns(panel: ReturnsPanel, path: str | Path) -> None:
    """Write ``panel`` as wide CSV; floats use shortest round-trip repr."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.assets])
        for j, t in enumerate(panel.times):
            w.writerow([t, *(repr(float(v)) for v in panel.returns[:, j])])


def compute_returns(panel: PricePanel, kind: ReturnKind = "log") -> ReturnsPanel:
    """Per-period returns; column ``t`` is labelled with the later time ``t+1``."""
    p = panel.prices
    if kind == "log":
        r = np.log(p[:, 1:] / p[:, :-1])
    elif kind == "simple":
        r = (p[:, 1:] - p[:, :-1]) / p[:, :-1]
    else:
        raise ValueError(f"unknown return kind {kind!r}; expected 'log' or 'simple'")
    return ReturnsPanel(assets=panel.assets, times=panel.times[1:], returns=r)


def select_subset(panel: ReturnsPanel, k: int, seed: int) -> ReturnsPanel:
    """``k`` assets drawn without replacement; parent row order is kept."""
    n = panel.n_assets
    if not 1 <= k <= n:
        raise ValueError(f"subset size k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(n, size=k, replace=False))
    return ReturnsPanel(
        assets=[panel.assets[i] for i in rows],
        times=panel.times,
        returns=panel.returns[rows],
    )
