import os
import subprocess
import sys

import numpy as np
import pytest

from qfreg import _core, _pycore

ccore = pytest.importorskip("qfreg._ccore")


def test_compiled_backend_selected_by_default():
    assert _core.BACKEND == "cython"


@pytest.mark.parametrize("value,expected", [("1", "python"), ("0", "cython"), ("", "cython")])
def test_environment_switch(value, expected):
    env = dict(os.environ, QFREG_PURE_PYTHON=value)
    out = subprocess.run([sys.executable, "-c", "import qfreg; print(qfreg.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_elementwise_kernels_agree():
    x = np.linspace(-30, 8, 501)
    p = np.linspace(1e-12, 1 - 1e-12, 501)
    np.testing.assert_allclose(ccore.norm_cdf(x), _pycore.norm_cdf(x), rtol=1e-13, atol=0)
    np.testing.assert_allclose(ccore.norm_ppf(p), _pycore.norm_ppf(p), rtol=1e-13, atol=1e-15)
    for a in (0.5, 2.5, 42.0, 43.0):
        b = np.concatenate([np.linspace(-60, -1e-3, 50), np.linspace(0, 200, 200)])
        np.testing.assert_allclose(ccore.reg_lower_gamma(a, b), _pycore.reg_lower_gamma(a, b),
                                   rtol=1e-12, atol=1e-300)


def test_density_kernels_agree(lung_fit):
    from qfreg import GaussianQuantile, density

    rd = density.ResidualDensity.from_fit(lung_fit, 8)
    t = np.linspace(0, rd.t_upper, 800)
    np.testing.assert_allclose(
        ccore.residual_t_density(t, rd.n, rd.weight, rd.nu1, rd.nu2, rd.theta),
        _pycore.residual_t_density(t, rd.n, rd.weight, rd.nu1, rd.nu2, rd.theta), rtol=1e-12, atol=1e-300)
    for sigma in (60.0, 120.0, 129.01840909090909, 400.0):
        md = density.MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, sigma))
        tau = np.linspace(0, md.tau_upper, 800)
        np.testing.assert_allclose(ccore.mean_response_t_density(tau, md.n, md.lam, md.c, md.K),
                                   _pycore.mean_response_t_density(tau, md.n, md.lam, md.c, md.K),
                                   rtol=1e-11, atol=1e-300)


def test_shapes_preserved():
    x = np.zeros((3, 4))
    for k in (ccore, _pycore):
        assert k.norm_cdf(x).shape == (3, 4)
        assert k.reg_lower_gamma(2.0, x).shape == (3, 4)
