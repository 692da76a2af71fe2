"""numba kernels against their numpy fallbacks, plus the env switch."""

import os
import subprocess
import sys

import numpy as np
import pytest

from tlbo import kernels
from tlbo._accel import HAVE_NUMBA

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


class TestEquivalence:
    def test_cross_cov(self, rng):
        xn1, xn2 = rng.random((7, 3)), rng.random((5, 3))
        xc1 = rng.integers(0, 3, (7, 2)).astype(float)
        xc2 = rng.integers(0, 3, (5, 2)).astype(float)
        args = (xn1, xc1, xn2, xc2, np.array([2.0, 1.0, 0.3]), np.array([1.0, 4.0]), 1.7)
        np.testing.assert_allclose(kernels.cross_cov_nb(*args), kernels.cross_cov_np(*args), rtol=1e-13, atol=1e-15)

    def test_cross_cov_no_categoricals(self, rng):
        xn = rng.random((4, 2))
        xc = np.empty((4, 0))
        args = (xn, xc, xn, xc, np.ones(2), np.empty(0), 1.0)
        np.testing.assert_allclose(kernels.cross_cov_nb(*args), kernels.cross_cov_np(*args), rtol=1e-13)

    def test_ranking_losses(self, rng):
        preds = rng.normal(size=(15, 4))
        preds[:, 1] = np.round(preds[:, 1])  # ties
        y = rng.normal(size=15)
        idx = rng.integers(0, 15, (30, 15))
        assert np.array_equal(kernels.ranking_losses_nb(preds, y, idx), kernels.ranking_losses_np(preds, y, idx))

    @pytest.mark.parametrize("l1", [True, False])
    @pytest.mark.parametrize("positive", [True, False])
    def test_cd(self, rng, l1, positive):
        a = rng.normal(size=(20, 4))
        y = a @ np.array([0.5, -0.2, 0.0, 1.0]) + 0.05 * rng.normal(size=20)
        w_nb = kernels.cd_solve_nb(a, y, 0.05, l1, positive, 1000, 1e-12)
        w_np = kernels.cd_solve_np(a, y, 0.05, l1, positive, 1000, 1e-12)
        np.testing.assert_allclose(w_nb, w_np, atol=1e-10)
        idx = rng.integers(0, 20, (10, 20))
        np.testing.assert_allclose(
            kernels.bootstrap_cd_nb(a, y, idx, 0.05, l1, positive, 1000, 1e-12),
            kernels.bootstrap_cd_np(a, y, idx, 0.05, l1, positive, 1000, 1e-12),
            atol=1e-10,
        )

    def test_rollout(self):
        params = np.array([0.3, 0.1, 0.5, 5e-4, 5e-3, 9.81])
        gain = np.array([-1.0, 20.0, -2.0, 3.0])
        x0 = np.array([0.0, 0.1, 0.0, 0.0])
        a = kernels.cartpole_rollout_nb(params, gain, x0, 0.01, 300, 1e3)
        b = kernels.cartpole_rollout_np(params, gain, x0, 0.01, 300, 1e3)
        assert a[1] == b[1]
        assert a[0] == pytest.approx(b[0], rel=1e-12)
        np.testing.assert_allclose(a[2], b[2], rtol=1e-10, atol=1e-14)

    def test_gower(self, rng):
        an, bn = rng.random((6, 2)), rng.random((3, 2))
        ac = rng.integers(0, 2, (6, 1)).astype(float)
        bc = rng.integers(0, 2, (3, 1)).astype(float)
        np.testing.assert_allclose(kernels.gower_matrix_nb(an, ac, bn, bc), kernels.gower_matrix_np(an, ac, bn, bc))


class TestSwitch:
    def _probe(self, flag):
        env = dict(os.environ, TLBO_DISABLE_NUMBA=flag)
        code = "from tlbo import kernels; print(kernels.USE_NUMBA, kernels.cross_cov is kernels.cross_cov_np)"
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        return out.stdout.split()

    def test_disable_flag(self):
        assert self._probe("1") == ["False", "True"]

    def test_default_uses_numba(self):
        assert self._probe("") == ["True", "False"]
