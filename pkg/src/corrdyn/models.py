"""One-factor and market-plus-sectors correlation models and panel synthesis.

Sector perturbations are applied block-wise: every off-diagonal pair inside a
sector gets ``rho0 + delta``. The perturbations across all perturbed pairs
must sum to zero so the mean off-diagonal correlation stays ``rho0``. Balanced
sectors (equal sizes, opposite deltas) satisfy this on their own; otherwise,
with ``compensate=True``, the residual is spread uniformly over the
unperturbed off-diagonal pairs.

Matrices that are not positive definite are rejected, never repaired.

Panels are drawn as ``x[i, t] = sum_j A[i, j] y[j, t]`` with ``A`` the lower
Cholesky factor and ``y`` standard normals from ``numpy.random.default_rng``
(PCG64). Draws are consumed in time-major order: all N draws of period 0,
then all of period 1, and so on.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .corr_engine import CorrelationMatrix, SpectrumSeries, WindowConfig, window_correlation_stack
from .errors import ConfigError, DataError, NotPositiveDefiniteError
from .ingest import ReturnsPanel

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


def _asset_names(n: int) -> tuple[str, ...]:
    width = max(3, len(str(n - 1)))
    return tuple(f"S{i:0{width}d}" for i in range(n))


def _check_rho0(n: int, rho0: float) -> None:
    if n < 2:
        raise ValueError(f"need at least 2 assets, got {n}")
    lower = -1.0 / (n - 1)
    if not lower < rho0 < 1.0:
        raise ValueError(
            f"rho0={rho0} outside the positive-definite range ({lower:.6g}, 1) for N={n}"
        )


@dataclass(frozen=True)
class Sector:
    members: tuple[int, ...]
    delta: float

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        if len(members) < 2:
            raise ValueError("a sector needs at least 2 members")
        if len(set(members)) != len(members):
            raise ValueError(f"duplicate sector members: {members}")
        object.__setattr__(self, "members", members)

    @property
    def n_pairs(self) -> int:
        m = len(self.members)
        return m * (m - 1) // 2


@dataclass(frozen=True)
class ModelSpec:
    """Global correlation ``rho0`` plus optional sector perturbations.

    Validated on construction: entries within [-1, 1], zero-sum perturbations
    and a successful Cholesky factorisation.
    """

    n_assets: int
    rho0: float
    sectors: tuple[Sector, ...] = ()
    compensate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sectors", tuple(self.sectors))
        _check_rho0(self.n_assets, self.rho0)
        seen: set[int] = set()
        for s in self.sectors:
            bad = [m for m in s.members if not 0 <= m < self.n_assets]
            if bad:
                raise ValueError(f"sector members {bad} outside [0, {self.n_assets})")
            if seen.intersection(s.members):
                raise ValueError("sectors must be disjoint")
            seen.update(s.members)
        cholesky(_build_matrix(self))

    def with_rho0(self, rho0: float) -> ModelSpec:
        return dataclasses.replace(self, rho0=rho0)


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Lower-triangular ``A`` with ``A @ A.T == C``."""

    lower: np.ndarray

    @property
    def n(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class Segment:
    """``length`` window-lengths of returns at correlation ``rho0``.

    Each period adds ``drift`` to every asset and scales the unit-variance
    draws by ``volatility``.
    """

    length: int
    rho0: float
    drift: float = 0.0
    volatility: float = 1.0

    def __post_init__(self):
        if int(self.length) != self.length or self.length < 1:
            raise ValueError(f"segment length must be an integer >= 1, got {self.length}")
        if not self.volatility > 0:
            raise ValueError(f"segment volatility must be > 0, got {self.volatility}")


@dataclass(frozen=True)
class RegimeSpec:
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("a regime schedule needs at least one segment")

    @classmethod
    def alternating(cls, n_segments: int, *, high_rho0: float = 0.5, low_rho0: float = 0.1,
                    high_drift: float = 0.0, low_drift: float = 0.0, length: int = 1,
                    volatility: float = 1.0, start_high: bool = True) -> RegimeSpec:
        """High/low correlation segments in alternation.

        By default high correlation is paired with whatever ``high_drift`` is
        given; pass a negative ``high_drift`` for drawdown-like regimes.
        """
        segs = []
        for k in range(n_segments):
            high = (k % 2 == 0) == start_high
            segs.append(Segment(length, high_rho0 if high else low_rho0,
                                high_drift if high else low_drift, volatility))
        return cls(tuple(segs))


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

def one_factor_matrix(n: int, rho0: float) -> CorrelationMatrix:
    """All off-diagonal entries ``rho0``."""
    _check_rho0(n, rho0)
    c = np.full((n, n), float(rho0))
    np.fill_diagonal(c, 1.0)
    return CorrelationMatrix(c, _asset_names(n))


def analytic_one_factor_spectrum(n: int, rho0: float) -> tuple[float, float, int]:
    """``(market eigenvalue, degenerate eigenvalue, its multiplicity)``."""
    _check_rho0(n, rho0)
    return (n - 1) * rho0 + 1.0, 1.0 - rho0, n - 1


def _build_matrix(spec: ModelSpec) -> CorrelationMatrix:
    n = spec.n_assets
    c = np.full((n, n), float(spec.rho0))
    perturbed = np.zeros((n, n), dtype=bool)
    total = 0.0
    for s in spec.sectors:
        idx = np.array(s.members)
        c[np.ix_(idx, idx)] = spec.rho0 + s.delta
        perturbed[np.ix_(idx, idx)] = True
        total += s.delta * s.n_pairs
    np.fill_diagonal(perturbed, True)
    n_free = int((~perturbed).sum()) // 2
    if abs(total) > 1e-12:
        if not spec.compensate:
            raise DataError(f"sector perturbations sum to {total:.6g}, not zero")
        if n_free == 0:
            raise DataError("no unperturbed pairs left to compensate unbalanced sectors")
        c[~perturbed] += -total / n_free
    np.fill_diagonal(c, 1.0)
    if np.any(np.abs(c) > 1.0):
        raise DataError("perturbed correlations fall outside [-1, 1]")
    return CorrelationMatrix(c, _asset_names(n))


def market_plus_sectors_matrix(spec: ModelSpec) -> CorrelationMatrix:
    return _build_matrix(spec)


def cholesky(c: CorrelationMatrix | np.ndarray) -> CholeskyFactor:
    """Lower Cholesky factor; raises :class:`NotPositiveDefiniteError` with the
    0-based index of the first non-positive pivot."""
    a = c.values if isinstance(c, CorrelationMatrix) else np.asarray(c, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"cholesky needs a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12:
        raise DataError("cholesky needs a symmetric matrix")
    lower, pivot = _kernels.cholesky_lower(np.ascontiguousarray(a))
    if pivot >= 0:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (pivot {pivot} is non-positive)", pivot=int(pivot))
    return CholeskyFactor(lower)


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def _draw(rng: np.random.Generator, lower: np.ndarray, length: int) -> np.ndarray:
    y = rng.standard_normal((length, lower.shape[0]))  # (t, j), t-major
    return lower @ y.T


def generate_panel(a: CholeskyFactor | np.ndarray, length: int, seed: int,
                   assets: Sequence[str] | None = None) -> ReturnsPanel:
    """``length`` periods of Gaussian returns correlated by ``A A^T``."""
    lower = a.lower if isinstance(a, CholeskyFactor) else np.asarray(a, dtype=float)
    if length < 2:
        raise ValueError(f"need at least 2 periods, got {length}")
    x = _draw(np.random.default_rng(seed), lower, length)
    n = lower.shape[0]
    return ReturnsPanel(assets=tuple(assets) if assets else _asset_names(n),
                        times=[str(t) for t in range(length)], returns=x)


def generate_regime_panel(model: ModelSpec, regimes: RegimeSpec, window_length: int,
                          seed: int) -> tuple[ReturnsPanel, np.ndarray]:
    """Concatenate one sub-panel per segment; returns ``(panel, index)``.

    A segment of ``length`` k spans ``k * window_length`` periods. A single
    generator feeds all segments in order. The index is the equal-weighted
    mean across assets.
    """
    rng = np.random.default_rng(seed)
    blocks = []
    for seg in regimes.segments:
        spec = model.with_rho0(seg.rho0)
        lower = cholesky(market_plus_sectors_matrix(spec)).lower
        x = _draw(rng, lower, seg.length * window_length)
        if seg.volatility != 1.0:
            x = seg.volatility * x
        if seg.drift != 0.0:
            x = x + seg.drift
        blocks.append(x)
    x = np.concatenate(blocks, axis=1)
    panel = ReturnsPanel(assets=_asset_names(model.n_assets),
                         times=[str(t) for t in range(x.shape[1])], returns=x)
    return panel, x.mean(axis=0)


def one_factor_spectra(panel: ReturnsPanel, cfg: WindowConfig) -> SpectrumSeries:
    """Spectra of exact one-factor matrices whose ``rho0`` is each window's
    mean empirical off-diagonal correlation."""
    n = panel.n_assets
    starts = cfg.starts(panel.length)
    rho = np.empty(starts.shape[0])
    for lo in range(0, starts.shape[0], 256):
        c = window_correlation_stack(panel.returns, starts[lo:lo + 256], cfg.length,
                                     panel.assets)
        rho[lo:lo + 256] = (c.sum(axis=(1, 2)) - n) / (n * (n - 1))
    lam = np.empty((starts.shape[0], n))
    lam[:, :-1] = (1.0 - rho)[:, None]
    lam[:, -1] = (n - 1) * rho + 1.0
    lam.sort(axis=1)
    return SpectrumSeries(window_starts=starts, eigenvalues=lam, assets=panel.assets,
                          window_length=cfg.length, n_observations=panel.length)


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def model_from_dict(doc: dict) -> tuple[ModelSpec, RegimeSpec | None, int | None]:
    """Parse ``{"model": ..., "regimes": ...}``; returns ``(model, regimes, window)``."""
    try:
        m = doc["model"]
        sectors = tuple(Sector(tuple(s["members"]), float(s["delta"]))
                        for s in m.get("sectors", ()))
        model = ModelSpec(int(m["n_assets"]), float(m["rho0"]), sectors,
                          bool(m.get("compensate", True)))
        regimes = None
        window = None
        if "regimes" in doc:
            r = doc["regimes"]
            window = r.get("window")
            regimes = RegimeSpec(tuple(
                Segment(int(s["length"]), float(s["rho0"]), float(s.get("drift", 0.0)),
                        float(s.get("volatility", 1.0)))
                for s in r["segments"]))
            for seg in regimes.segments:
                model.with_rho0(seg.rho0)
    except KeyError as exc:
        raise ConfigError(f"model config is missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model config: {exc}") from None
    return model, regimes, window


def load_model_config(path: str | Path) -> tuple[ModelSpec, RegimeSpec | None, int | None]:
    """Read a TOML model file. Layout::

        [model]
        n_assets = 49
        rho0 = 0.204

        [[model.sectors]]
        members = [0, 1, 2, 3, 4]
        delta = 0.15

        [regimes]
        window = 200            # periods per unit of segment length

        [[regimes.segments]]
        length = 1
        rho0 = 0.5
        drift = -0.002
        volatility = 0.01
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"model config not found: {path}")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return model_from_dict(doc)
