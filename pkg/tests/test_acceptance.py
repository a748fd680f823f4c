"""Exit criteria, one test per criterion; a PASS/FAIL line per criterion is
printed in the terminal summary."""

import hashlib
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import record_acceptance
from corrdyn.corr_engine import (WindowConfig, correlation_matrix, eigendecompose,
                                 normalize_window, sliding_spectra)
from corrdyn.dynamics import band_average, normalize_series, partition_report, window_index_return
from corrdyn.ipr import bulk_median, ipr_profile
from corrdyn.models import (ModelSpec, RegimeSpec, Sector, cholesky, generate_panel,
                            generate_regime_panel, market_plus_sectors_matrix, one_factor_matrix)
from oracles import jacobi_eigh

SEEDS = range(10)
REGIME_WINDOW = 200
REGIME_N = 50
REGIME_BAND = 40

MODEL_SPECS = [
    ModelSpec(50, 0.204),
    ModelSpec(49, 0.204),
    ModelSpec(100, 0.1),
    ModelSpec(49, 0.204, (Sector(range(5), 0.15), Sector(range(5, 10), -0.15))),
    ModelSpec(50, 0.5), ModelSpec(50, 0.1),
    ModelSpec(30, 0.3, (Sector(range(4), 0.2),)),
]


def _regime_spec() -> RegimeSpec:
    # ten 200-period segments: 2000 periods, 1801 windows at T = 200, stride 1
    return RegimeSpec.alternating(10, high_rho0=0.5, low_rho0=0.1, high_drift=-0.002,
                                  low_drift=0.002, volatility=0.01)


@pytest.fixture(scope="module")
def regime_runs():
    cfg = WindowConfig(REGIME_WINDOW, 1)
    runs = []
    for seed in SEEDS:
        t0 = time.perf_counter()
        panel, index = generate_regime_panel(ModelSpec(REGIME_N, 0.3), _regime_spec(),
                                             REGIME_WINDOW, seed)
        series = sliding_spectra(panel, cfg)
        norm = normalize_series(series)
        win_ret = window_index_return(index, cfg, expected_length=panel.length)
        runs.append(dict(series=series, norm=norm, win_ret=win_ret,
                         seconds=time.perf_counter() - t0))
    return runs


def test_1_analytic_one_factor_spectrum():
    t0 = time.perf_counter()
    lam = eigendecompose(one_factor_matrix(50, 0.204)).eigenvalues
    elapsed = time.perf_counter() - t0
    oracle, _ = jacobi_eigh(one_factor_matrix(50, 0.204).values)
    err_max = abs(lam[-1] - 10.996)
    err_bulk = np.max(np.abs(lam[:-1] - 0.796))
    ok = (err_max <= 1e-9 and err_bulk <= 1e-9 and elapsed < 1.0
          and np.max(np.abs(lam - oracle)) <= 1e-9 and np.max(np.abs(oracle[:-1] - 0.796)) <= 1e-9)
    record_acceptance("1 analytic one-factor spectrum", ok,
                      f"|dmax|={err_max:.1e} |dbulk|={err_bulk:.1e} t={elapsed:.3f}s")
    assert ok


def test_2_trace_conservation(regime_runs):
    worst = 0.0
    t0 = time.perf_counter()
    big = generate_panel(cholesky(one_factor_matrix(100, 0.2)), 2000, seed=21)
    s = sliding_spectra(big, WindowConfig(200, 1))  # Q = 2
    sweep = time.perf_counter() - t0
    worst = max(worst, np.max(np.abs(s.eigenvalues.sum(axis=1) - 100)) / 100)
    mid = generate_panel(cholesky(one_factor_matrix(50, 0.2)), 2000, seed=22)
    s = sliding_spectra(mid, WindowConfig(500, 1))  # Q = 10
    worst = max(worst, np.max(np.abs(s.eigenvalues.sum(axis=1) - 50)) / 50)
    for run in regime_runs:
        lam = run["series"].eigenvalues
        worst = max(worst, np.max(np.abs(lam.sum(axis=1) - REGIME_N)) / REGIME_N)
    ok = worst <= 1e-8 and sweep < 30.0
    record_acceptance("2 trace conservation", ok,
                      f"max|sum-N|/N={worst:.1e} sweep(N=100,L=2000)={sweep:.1f}s")
    assert ok


def _random_correlations(count=100):
    g = np.random.default_rng(314)
    for _ in range(count):
        n = int(g.integers(2, 101))
        t = int(g.integers(max(3, n // 2), 3 * n + 3))
        x = g.standard_normal((n, t)) + g.uniform(0, 1) * g.standard_normal(t)
        yield correlation_matrix(normalize_window(x))


def test_3_eigen_residual():
    worst = 0.0
    mats = list(_random_correlations()) + [market_plus_sectors_matrix(s) for s in MODEL_SPECS]
    for c in mats:
        sp = eigendecompose(c)
        r = c.values @ sp.eigenvectors - sp.eigenvectors * sp.eigenvalues
        worst = max(worst, float(np.max(np.abs(r))))
    ok = worst <= 1e-8
    record_acceptance("3 eigen residual", ok, f"max residual={worst:.1e} over {len(mats)} matrices")
    assert ok


def test_4_cholesky_and_sampling():
    round_trip = 0.0
    for c in [market_plus_sectors_matrix(s) for s in MODEL_SPECS] + list(_random_correlations(20)):
        try:
            a = cholesky(c).lower
        except ValueError:
            continue  # rank-deficient sample matrices are legitimately rejected
        round_trip = max(round_trip, float(np.max(np.abs(a @ a.T - c.values))))
    errors = {}
    for spec in (MODEL_SPECS[0], MODEL_SPECS[3]):
        c = market_plus_sectors_matrix(spec)
        a = cholesky(c)
        for t, seed in ((10_000, 41), (100_000, 42)):
            emp = correlation_matrix(normalize_window(generate_panel(a, t, seed).returns))
            errors[(spec.n_assets, len(spec.sectors), t)] = float(np.max(np.abs(emp.values - c.values)))
    ok = (round_trip <= 1e-10
          and all(e <= 0.05 for (_, _, t), e in errors.items() if t == 10_000)
          and all(e <= 0.02 for (_, _, t), e in errors.items() if t == 100_000))
    detail = " ".join(f"T={k[2]}:{v:.4f}" for k, v in errors.items())
    record_acceptance("4 cholesky round trip + sampling", ok, f"rt={round_trip:.1e} {detail}")
    assert ok


def test_5_compensatory_dynamics(regime_runs):
    corrs = []
    for run in regime_runs:
        norm = run["norm"]
        corrs.append(float(np.corrcoef(norm.largest, band_average(norm, REGIME_BAND))[0, 1]))
    first = regime_runs[0]
    ok = (first["series"].n_windows >= 800 and corrs[0] <= -0.8 and first["seconds"] < 60
          and all(c <= -0.8 for c in corrs))
    record_acceptance("5 compensatory dynamics", ok,
                      f"W={first['series'].n_windows} corr(seed0)={corrs[0]:.4f} "
                      f"worst={max(corrs):.4f} t={first['seconds']:.1f}s")
    assert ok


def test_6_partition_sign_pattern(regime_runs):
    expected = (1, -1, -1, 1)
    hits = 0
    for run in regime_runs:
        rep = partition_report(run["norm"], run["win_ret"], band=REGIME_BAND, threshold=1.0)
        hits += rep.signs() == expected
    ok = hits >= 9
    record_acceptance("6 drawdown partition sign pattern", ok, f"{hits}/10 seeds match (+,-,-,+)")
    assert ok


def test_7_ipr_features():
    n, t = 49, 1619
    one = cholesky(one_factor_matrix(n, 0.204))
    sectors = cholesky(market_plus_sectors_matrix(MODEL_SPECS[3]))
    top_ok = 0
    sector_ok = 0
    for seed in SEEDS:
        p = generate_panel(one, t, seed)
        prof = ipr_profile(eigendecompose(correlation_matrix(normalize_window(p.returns))))
        top_ok += prof.values[-1] <= 2 / n
        p = generate_panel(sectors, t, 1000 + seed)
        prof = ipr_profile(eigendecompose(correlation_matrix(normalize_window(p.returns))))
        med = bulk_median(prof)
        sector_ok += prof.values[0] > med and prof.values[-2] > med
    ok = top_ok == 10 and sector_ok >= 9
    record_acceptance("7 IPR features", ok,
                      f"top<=2/N {top_ok}/10, sector edges>median {sector_ok}/10")
    assert ok


def _run_cli(args, out, threads):
    env = dict(os.environ, NUMBA_NUM_THREADS=str(threads), OMP_NUM_THREADS=str(threads),
               OPENBLAS_NUM_THREADS=str(threads), MKL_NUM_THREADS=str(threads))
    subprocess.run([sys.executable, "-m", "corrdyn", *args, "--out-dir", str(out)],
                   env=env, check=True, capture_output=True)
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(out.iterdir())}


@pytest.mark.slow
def test_8_determinism(tmp_path):
    model = tmp_path / "model.toml"
    model.write_text(
        "[model]\nn_assets = 30\nrho0 = 0.3\n[regimes]\nwindow = 100\n"
        + "".join(f"[[regimes.segments]]\nlength = 1\nrho0 = {r}\ndrift = {d}\n"
                  "volatility = 0.01\n" for r, d in [(0.5, -0.002), (0.1, 0.002)] * 3))
    results = {}
    for label, threads in (("a", 1), ("b", 4), ("c", 1)):
        sim = tmp_path / f"sim_{label}"
        h = _run_cli(["simulate", "--model", str(model), "--seed", "5"], sim, threads)
        h.update({f"analyze/{k}": v for k, v in _run_cli(
            ["analyze", "--input", str(sim / "panel.csv"), "--input-type", "returns",
             "--window", "100", "--eigenvectors"], tmp_path / f"an_{label}", threads).items()})
        h.update({f"partition/{k}": v for k, v in _run_cli(
            ["partition", "--input", str(sim / "panel.csv"), "--input-type", "returns",
             "--index", str(sim / "index.csv"), "--window", "100", "--band", "24"],
            tmp_path / f"pa_{label}", threads).items()})
        h.update({f"ipr/{k}": v for k, v in _run_cli(
            ["ipr", "--input", str(sim / "panel.csv"), "--input-type", "returns",
             "--per-window", "--window", "100", "--stride", "50"],
            tmp_path / f"ip_{label}", threads).items()})
        results[label] = h
    ok = results["a"] == results["b"] == results["c"] and len(results["a"]) >= 12
    record_acceptance("8 determinism", ok,
                      f"{len(results['a'])} files identical across reruns and 1/4 threads")
    assert ok
