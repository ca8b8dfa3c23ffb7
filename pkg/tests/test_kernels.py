import os
import subprocess
import sys

import numpy as np
import pytest

from ejectshap import kernels
from ejectshap.shapley import _mask_game_shapley, weight_table


def test_env_forces_python_fallback():
    env = dict(os.environ, EJECTSHAP_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from ejectshap import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_context_restores():
    before = kernels.backend()
    with kernels.backend_context("python"):
        assert kernels.backend() == "python"
    assert kernels.backend() == before
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


@pytest.mark.parametrize("k", [0, 1, 4, 9])
def test_game_shapley_matches_vectorized(backend, k):
    u = np.random.default_rng(k).normal(size=1 << k)
    phi = np.asarray(kernels.game_shapley(u, k, weight_table()))
    if k:
        np.testing.assert_allclose(phi, _mask_game_shapley(u, k), rtol=0, atol=1e-13)
    assert phi.sum() == pytest.approx(u[-1] - u[0], abs=1e-12)
