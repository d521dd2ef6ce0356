import numpy as np
import pytest

from approxkkm.core import make_rng
from approxkkm.linalg import PowerIterationWarning, SingularKernelError, power_iteration, psd_solve, ridge_shift


class TestPsdSolve:
    def test_well_conditioned(self):
        rng = make_rng(0)
        A = rng.standard_normal((6, 6))
        A = A @ A.T + np.eye(6)
        B = rng.standard_normal((6, 2))
        np.testing.assert_allclose(A @ psd_solve(A, B), B, atol=1e-12)

    def test_singular_falls_back_to_pinv(self):
        A = np.ones((3, 3))
        x = psd_solve(A, np.ones(3))
        np.testing.assert_allclose(x, np.ones(3) / 3, atol=1e-12)

    def test_singular_strict(self):
        with pytest.raises(SingularKernelError):
            psd_solve(np.ones((3, 3)), np.ones(3), pinv=False)

    def test_ridge_is_relative(self):
        A = 4.0 * np.eye(3)
        assert ridge_shift(A, 0.5) == 2.0
        np.testing.assert_allclose(psd_solve(A, np.ones(3), ridge=0.5), np.ones(3) / 6)


class TestPowerIteration:
    def test_diagonal(self):
        res = power_iteration(np.diag([1.0, 5.0, 2.0]))
        assert res.value == pytest.approx(5.0, rel=1e-8)
        assert res.converged

    def test_matches_eigvalsh(self):
        A = make_rng(1).standard_normal((30, 30))
        A = A @ A.T
        assert power_iteration(A).value == pytest.approx(np.linalg.eigvalsh(A)[-1], rel=1e-6)

    def test_zero_matrix(self):
        assert power_iteration(np.zeros((4, 4))).value == 0.0

    def test_not_converged_warns(self):
        A = np.diag([1.0, 0.999999, 0.5])
        with pytest.warns(PowerIterationWarning):
            res = power_iteration(A, tol=1e-15, maxiter=3)
        assert not res.converged
