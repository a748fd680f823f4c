"""Eigen-spectrum dynamics of sliding-window equal-time correlation matrices."""

__version__ = "0.1.0"

from .corr_engine import (CorrelationMatrix, Spectrum, SpectrumSeries, WindowConfig,
                          correlation_matrix, eigendecompose, normalize_window, sliding_spectra)
from .dynamics import (NormalizedSeries, PartitionReport, band_average, export_heatmap,
                       normalize_series, partition_by_sdu, partition_report,
                       window_index_return)
from .ingest import PricePanel, ReturnsPanel, compute_returns, load_prices, select_subset
from .ipr import IprProfile, ipr, ipr_profile
from .models import (CholeskyFactor, ModelSpec, RegimeSpec, Sector, Segment,
                     analytic_one_factor_spectrum, cholesky, generate_panel,
                     generate_regime_panel, market_plus_sectors_matrix, one_factor_matrix)

__all__ = [
    "CorrelationMatrix", "Spectrum", "SpectrumSeries", "WindowConfig", "correlation_matrix",
    "eigendecompose", "normalize_window", "sliding_spectra",
    "NormalizedSeries", "PartitionReport", "band_average", "export_heatmap", "normalize_series",
    "partition_by_sdu", "partition_report", "window_index_return",
    "PricePanel", "ReturnsPanel", "compute_returns", "load_prices", "select_subset",
    "IprProfile", "ipr", "ipr_profile",
    "CholeskyFactor", "ModelSpec", "RegimeSpec", "Sector", "Segment",
    "analytic_one_factor_spectrum", "cholesky", "generate_panel", "generate_regime_panel",
    "market_plus_sectors_matrix", "one_factor_matrix",
]
