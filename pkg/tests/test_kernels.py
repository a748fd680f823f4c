import os
import subprocess
import sys

import numpy as np
import pytest

from corrdyn import _kernels
from oracles import brute_correlation

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not available")


def test_numpy_window_correlations_match_brute_force(rng):
    x = rng.standard_normal((4, 30))
    starts = np.array([0, 3, 10], dtype=np.int64)
    got = _kernels.window_correlations_numpy(x, starts, 12)
    for k, s in enumerate(starts):
        np.testing.assert_allclose(got[k], brute_correlation(x[:, s:s + 12]), atol=1e-13)


@needs_numba
def test_numba_and_numpy_window_correlations_agree(rng):
    x = rng.standard_normal((20, 300))
    starts = np.arange(0, 101, 7, dtype=np.int64)
    a = _kernels.window_correlations_numba(x, starts, 200)
    b = _kernels.window_correlations_numpy(x, starts, 200)
    np.testing.assert_allclose(a, b, atol=1e-13)
    assert np.all(np.diagonal(a, axis1=1, axis2=2) == 1.0)
    assert np.array_equal(a, a.transpose(0, 2, 1))


@pytest.mark.parametrize("impl", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_cholesky_kernels_reconstruct(impl, rng):
    fn = getattr(_kernels, f"cholesky_{impl}")
    b = rng.standard_normal((8, 8))
    a = b @ b.T + 8 * np.eye(8)
    lower, pivot = fn(a)
    assert pivot == -1
    np.testing.assert_allclose(lower @ lower.T, a, atol=1e-12)
    np.testing.assert_allclose(lower, np.linalg.cholesky(a), atol=1e-12)


@pytest.mark.parametrize("impl", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_cholesky_kernels_report_first_bad_pivot(impl):
    fn = getattr(_kernels, f"cholesky_{impl}")
    a = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, -1.0]])
    assert fn(a)[1] == 2
    assert fn(np.ones((2, 2)))[1] == 1


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, CORRDYN_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from corrdyn import _kernels as k; print(k.BACKEND, k.HAVE_NUMBA)"],
        env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "False"]
