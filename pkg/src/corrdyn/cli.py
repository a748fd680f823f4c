"""Command line front end: ``corrdyn {analyze,simulate,partition,ipr}``.

Precedence is config file > flags > defaults. Every run writes
``manifest.json`` next to its outputs with all parameters, input hashes and
output hashes; the manifest holds no timestamps or absolute paths so reruns
are byte-identical.

On failure the exit status is 2 and stderr carries one JSON line
``{"error": <type>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, _kernels
from .corr_engine import WindowConfig, sliding_spectra, write_eigenvectors, write_spectrum_csv
from .dynamics import (band_average, equal_weighted_index, export_heatmap, normalize_series,
                       partition_report, window_index_return, write_series_csv)
from .errors import ConfigError, CorrDynError
from .ingest import (ReturnsPanel, compute_returns, load_prices, load_returns, select_subset,
                     write_returns)
from .ipr import IprProfile, ipr_columns, write_profile_csv
from .models import (ModelSpec, cholesky, generate_panel, generate_regime_panel,
                     load_model_config, market_plus_sectors_matrix, one_factor_spectra)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

DEFAULT_WINDOW = 200


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class _Outputs:
    """Atomic file writer for one run directory (temp file + rename)."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.written: dict[str, str] = {}

    def write(self, name: str, writer: Callable[[Path], None]) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.dir)
        os.close(fd)
        tmp_path = Path(tmp)
        try:
            writer(tmp_path)
            os.replace(tmp_path, self.dir / name)
        finally:
            if tmp_path.exists():
                tmp_path.unlink()
        self.written[name] = _sha256(self.dir / name)
        return self.dir / name

    def manifest(self, doc: dict) -> None:
        doc = dict(doc, outputs=dict(sorted(self.written.items())))
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
        self.write("manifest.json", lambda p: p.write_text(text, encoding="utf-8"))


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _parse_reference(text: str | None) -> tuple[int, int] | None:
    if text is None or text == "":
        return None
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"--reference must look like START:END, got {text!r}") from None


def _apply_config(args: argparse.Namespace) -> None:
    if not args.config:
        return
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = vars(args)
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if attr in ("command", "config", "func") or attr not in known:
            raise ConfigError(f"{path}: unknown setting {key!r} for '{args.command}'")
        setattr(args, attr, value)


def _panel(args) -> ReturnsPanel:
    if args.input is None:
        raise ConfigError("--input is required")
    if args.input_type == "returns":
        panel = load_returns(args.input)
    else:
        panel = compute_returns(load_prices(args.input, args.input_format), args.return_kind)
    if args.subset is not None:
        panel = select_subset(panel, int(args.subset), int(args.seed))
    return panel


def _index(args, panel: ReturnsPanel) -> tuple[np.ndarray, str]:
    if args.index is None:
        return equal_weighted_index(panel), "equal_weighted"
    if args.input_type == "returns":
        idx = load_returns(args.index)
    else:
        idx = compute_returns(load_prices(args.index, "wide"), args.return_kind)
    if idx.n_assets != 1:
        raise ConfigError(f"index file must hold exactly one series, found {idx.n_assets}")
    if idx.times != panel.times:
        raise ConfigError("index time labels do not match the panel")
    return idx.returns[0], "file"


def _window(args) -> WindowConfig:
    try:
        return WindowConfig(int(args.window), int(args.stride))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _band(args, n: int) -> int:
    return int(args.band) if args.band is not None else math.ceil(0.8 * n)


def _input_record(args, *names: str) -> dict:
    rec = {}
    for name in names:
        value = getattr(args, name, None)
        if value:
            p = Path(value)
            rec[name] = {"file": p.name, "sha256": _sha256(p)}
    return rec


def _base_manifest(args, params: dict) -> dict:
    return {
        "tool": "corrdyn",
        "version": __version__,
        "command": args.command,
        "backend": _kernels.BACKEND,
        "parameters": params,
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> None:
    panel = _panel(args)
    cfg = _window(args)
    band = _band(args, panel.n_assets)
    reference = _parse_reference(args.reference)
    series = sliding_spectra(panel, cfg, keep_vectors=args.eigenvectors)
    norm = normalize_series(series, reference)
    band_series = band_average(norm, band)

    out = _Outputs(Path(args.out_dir))
    out.write("spectrum.csv", lambda p: write_spectrum_csv(series, p))
    out.write("normalized.csv", lambda p: export_heatmap(norm, p))
    out.write("band.csv", lambda p: write_series_csv(
        p, series.window_starts, {"largest_sdu": norm.largest, f"band_{band}_sdu": band_series}))
    if args.eigenvectors:
        out.write("eigenvectors.npy", lambda p: write_eigenvectors(series, p))
    if args.one_factor:
        model = one_factor_spectra(panel, cfg)
        model_norm = normalize_series(model, reference)
        out.write("one_factor_spectrum.csv", lambda p: write_spectrum_csv(model, p))
        out.write("one_factor_normalized.csv", lambda p: export_heatmap(model_norm, p))

    params = {
        "window": cfg.length, "stride": cfg.stride, "band": band,
        "reference": list(norm.reference), "seed": args.seed, "subset": args.subset,
        "return_kind": args.return_kind, "input_type": args.input_type,
        "input_format": args.input_format,
    }
    doc = _base_manifest(args, params)
    doc["inputs"] = _input_record(args, "input", "config")
    doc["derived"] = {
        "n_assets": panel.n_assets, "n_observations": panel.length,
        "n_windows": series.n_windows, "q_ratio": cfg.q_ratio(panel.n_assets),
        "assets": list(panel.assets),
    }
    out.manifest(doc)


def cmd_simulate(args) -> None:
    regimes = None
    window = int(args.window)
    if args.model:
        model, regimes, cfg_window = load_model_config(args.model)
        if cfg_window is not None:
            window = int(cfg_window)
    else:
        if args.n_assets is None or args.rho0 is None:
            raise ConfigError("simulate needs --model or both --n-assets and --rho0")
        try:
            model = ModelSpec(int(args.n_assets), float(args.rho0))
        except (ValueError, CorrDynError) as exc:
            raise ConfigError(f"invalid model: {exc}") from None
    seed = int(args.seed)

    if regimes is not None:
        panel, index = generate_regime_panel(model, regimes, window, seed)
    else:
        if args.length is None:
            raise ConfigError("simulate without regimes needs --length")
        a = cholesky(market_plus_sectors_matrix(model))
        panel = generate_panel(a, int(args.length), seed)
        index = equal_weighted_index(panel)
    index_panel = ReturnsPanel(assets=("index",), times=panel.times, returns=index[None, :])

    out = _Outputs(Path(args.out_dir))
    out.write("panel.csv", lambda p: write_returns(panel, p))
    out.write("index.csv", lambda p: write_returns(index_panel, p))
    params = {
        "seed": seed, "n_assets": model.n_assets, "rho0": model.rho0,
        "sectors": [{"members": list(s.members), "delta": s.delta} for s in model.sectors],
        "length": panel.length,
        "regimes": None if regimes is None else {
            "window": window,
            "segments": [{"length": s.length, "rho0": s.rho0, "drift": s.drift,
                          "volatility": s.volatility} for s in regimes.segments],
        },
    }
    doc = _base_manifest(args, params)
    doc["inputs"] = _input_record(args, "model", "config")
    out.manifest(doc)


def cmd_partition(args) -> None:
    panel = _panel(args)
    index, index_source = _index(args, panel)
    cfg = _window(args)
    band = _band(args, panel.n_assets)
    theta = float(args.threshold_sdu)
    if not theta > 0:
        raise ConfigError(f"--threshold-sdu must be > 0, got {theta}")
    series = sliding_spectra(panel, cfg)
    norm = normalize_series(series, _parse_reference(args.reference))
    win_ret = window_index_return(index, cfg, kind=args.return_kind,
                                  expected_length=series.n_observations)
    report = partition_report(norm, win_ret, band=band, threshold=theta)

    out = _Outputs(Path(args.out_dir))
    out.write("partition.json", report.write_json)
    out.write("partition.csv", report.write_csv)
    out.write("window_returns.csv", lambda p: write_series_csv(
        p, series.window_starts,
        {"index_return": win_ret, "largest_sdu": norm.largest,
         f"band_{band}_sdu": band_average(norm, band)}))
    params = {
        "window": cfg.length, "stride": cfg.stride, "band": band, "threshold_sdu": theta,
        "reference": list(norm.reference), "seed": args.seed, "subset": args.subset,
        "return_kind": args.return_kind, "input_type": args.input_type,
        "input_format": args.input_format, "index_source": index_source,
    }
    doc = _base_manifest(args, params)
    doc["inputs"] = _input_record(args, "input", "index", "config")
    doc["derived"] = {"n_assets": panel.n_assets, "n_windows": series.n_windows,
                      "q_ratio": cfg.q_ratio(panel.n_assets)}
    out.manifest(doc)


def _write_window_iprs(series, path: Path) -> None:
    import csv

    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_start", "eigen_index", "eigenvalue", "ipr"])
        for s, lam, vals in zip(series.window_starts, series.eigenvalues, series.ipr):
            for k in range(lam.shape[0]):
                w.writerow([int(s), k + 1, repr(float(lam[k])), repr(float(vals[k]))])


def cmd_ipr(args) -> None:
    panel = _panel(args)
    per_window = args.per_window
    length = int(args.window) if per_window else panel.length
    try:
        cfg = WindowConfig(length, int(args.stride) if per_window else 1)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    series = sliding_spectra(panel, cfg, keep_vectors=not per_window, compute_ipr=per_window)

    out = _Outputs(Path(args.out_dir))
    if per_window:
        out.write("ipr_windows.csv", lambda p: _write_window_iprs(series, p))
    else:
        spec = series.spectrum(0)
        profile = IprProfile(values=ipr_columns(spec.eigenvectors), eigenvalues=spec.eigenvalues)
        out.write("ipr.csv", lambda p: write_profile_csv(profile, p))
    params = {"window": cfg.length, "stride": cfg.stride, "per_window": per_window,
              "seed": args.seed, "subset": args.subset, "return_kind": args.return_kind,
              "input_type": args.input_type, "input_format": args.input_format}
    doc = _base_manifest(args, params)
    doc["inputs"] = _input_record(args, "input", "config")
    doc["derived"] = {"n_assets": panel.n_assets, "n_windows": series.n_windows,
                      "q_ratio": cfg.q_ratio(panel.n_assets)}
    out.manifest(doc)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, *, panel_input: bool = True) -> None:
    p.add_argument("--out-dir", required=True, help="directory for all outputs")
    p.add_argument("--config", help="TOML file whose settings override flags")
    p.add_argument("--seed", type=int, default=0, help="top-level RNG seed")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW,
                   help=f"window length T (default {DEFAULT_WINDOW})")
    p.add_argument("--stride", type=int, default=1, help="window stride (default 1)")
    p.add_argument("--return-kind", choices=("log", "simple"), default="log")
    if panel_input:
        p.add_argument("--input", help="price or returns panel CSV")
        p.add_argument("--input-format", choices=("wide", "long"), default="wide")
        p.add_argument("--input-type", choices=("prices", "returns"), default="prices")
        p.add_argument("--subset", type=int, help="analyse a random subset of K assets")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrdyn",
        description="Eigen-spectrum dynamics of sliding-window correlation matrices.")
    parser.add_argument("--version", action="version", version=f"corrdyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="spectra, SDU heatmap and band average")
    _common(p)
    p.add_argument("--reference", help="reference window rows START:END (half-open)")
    p.add_argument("--band", type=int, help="band size k (default ceil(0.8 N))")
    p.add_argument("--eigenvectors", action="store_true", help="also write eigenvectors.npy")
    p.add_argument("--one-factor", action="store_true",
                   help="also write spectra of the per-window one-factor model")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="generate a synthetic correlated panel")
    _common(p, panel_input=False)
    p.add_argument("--model", help="TOML model / regime file")
    p.add_argument("--n-assets", type=int, help="one-factor model size (without --model)")
    p.add_argument("--rho0", type=float, help="one-factor correlation (without --model)")
    p.add_argument("--length", type=int, help="number of periods (without regimes)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("partition", help="index returns by eigenvalue SDU partitions")
    _common(p)
    p.add_argument("--index", help="index CSV (one series); default equal-weighted")
    p.add_argument("--reference", help="reference window rows START:END (half-open)")
    p.add_argument("--band", type=int, help="band size k (default ceil(0.8 N))")
    p.add_argument("--threshold-sdu", type=float, default=1.0)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("ipr", help="inverse participation ratio profile")
    _common(p)
    p.add_argument("--per-window", action="store_true",
                   help="profile every sliding window instead of the whole period")
    p.set_defaults(func=cmd_ipr)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        args.func(args)
    except (CorrDynError, ValueError, OSError) as exc:
        msg = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(msg, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
