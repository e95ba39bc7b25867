"""Both kernel implementations must agree; the pure one is always importable."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from singvi import _kernels_py as pure
from singvi._backend import BACKEND

compiled = pytest.importorskip("singvi._kernels") if BACKEND == "cython" else None

CASES = [(0.25, 0.0), (0.5, 1e-8), (0.5, 0.3), (1.5, 2.5), (0.75, 40.0), (3.0, 1e6), (0.1, 1e8)]


@pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
@pytest.mark.parametrize("lam,beta", CASES)
def test_scalar_parity(lam, beta):
    for name in ("moment_G", "arm_kl"):
        a = getattr(pure, name)(lam, beta)
        b = getattr(compiled, name)(lam, beta)
        assert a == pytest.approx(b, rel=1e-13, abs=1e-300)
    assert pure.log_norm_B(2.0, 1.0, beta) == pytest.approx(compiled.log_norm_B(2.0, 1.0, beta),
                                                           rel=1e-13, abs=1e-14)
    if beta > 0:
        assert pure.log_reg_lower_gamma(lam, beta) == pytest.approx(
            compiled.log_reg_lower_gamma(lam, beta), rel=1e-13, abs=1e-15)


@pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
def test_orbit_parity():
    a = pure.cavi_orbit(0.5, 0.75, 1e4, 0.1, 1e-12, 500)
    b = compiled.cavi_orbit(0.5, 0.75, 1e4, 0.1, 1e-12, 500)
    assert a[2] == b[2]
    assert np.allclose(a[0], b[0], rtol=1e-12) and np.allclose(a[1], b[1], rtol=1e-12)


def test_env_forces_pure_python():
    code = "from singvi._backend import BACKEND; print(BACKEND)"
    env = dict(os.environ, SINGVI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"
