import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paramodel import _kernels_py, kernels

try:
    from paramodel import _ckernels
except ImportError:
    _ckernels = None

needs_compiled = pytest.mark.skipif(_ckernels is None, reason="compiled backend not built")


@needs_compiled
@given(st.integers(1, 3), st.sampled_from([8, 16]), st.integers(1, 40), st.integers(0, 2**31))
def test_trig_eval_backends_agree(d, n, n_points, seed):
    rng = np.random.default_rng(seed)
    shape = (n,) * d
    spectrum = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    freqs = tuple(np.fft.fftfreq(n, 1.0 / n) for _ in range(d))
    pts = rng.uniform(-1, 2, (n_points, d))
    a = _kernels_py.trig_eval(spectrum, freqs, pts)
    b = _ckernels.trig_eval(spectrum, freqs, pts)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.abs(spectrum).sum()


@needs_compiled
@given(st.integers(1, 4), st.integers(1, 30), st.integers(1, 3), st.integers(0, 2**31))
def test_window_bilinear_sum_backends_agree(J, W, R, seed):
    rng = np.random.default_rng(seed)
    Ku, Kv = rng.standard_normal((J, W)), rng.standard_normal((J, W))
    G = rng.standard_normal((W, W, R))
    a = _kernels_py.window_bilinear_sum(Ku, Kv, G)
    b = _ckernels.window_bilinear_sum(Ku, Kv, G)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(G).sum())


@needs_compiled
@given(st.integers(1, 50), st.integers(2, 5), st.integers(0, 2**31))
def test_pair_sector_ratios_backends_agree(P, D, seed):
    rng = np.random.default_rng(seed)
    Fx, Fy = rng.standard_normal((P, D)), rng.standard_normal((P, D))
    G = rng.standard_normal((P, D, D))
    sector_of = rng.integers(-1, 2, D).astype(np.int64)
    expo = np.array([1.2, 0.45])
    dist = rng.uniform(0.01, 1.0, P)
    a = _kernels_py.pair_sector_ratios(Fx, Fy, G, sector_of, expo, dist)
    b = _ckernels.pair_sector_ratios(Fx, Fy, G, sector_of, expo, dist)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_environment_variable_forces_the_numpy_backend():
    env = dict(os.environ, PARAMODEL_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from paramodel import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_name_matches_the_loaded_module():
    expected = "cython" if _ckernels is not None and os.environ.get(kernels.PURE_ENV) != "1" else "python"
    assert kernels.BACKEND == expected
