"""Small dense linear-algebra helpers shared by the solvers and the bound checks."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SingularKernelError(np.linalg.LinAlgError):
    """K-hat is singular and neither a ridge nor the pseudo-inverse is allowed."""


class PowerIterationWarning(RuntimeWarning):
    pass


def ridge_shift(Khat: np.ndarray, ridge: float) -> float:
    """Absolute diagonal shift lambda * tr(K-hat) / m."""
    m = Khat.shape[0]
    return float(ridge) * float(np.trace(Khat)) / m if ridge else 0.0


def psd_solve(A: np.ndarray, B: np.ndarray, ridge: float = 0.0, pinv: bool = True) -> np.ndarray:
    """Solve (A + ridge*tr(A)/m I) X = B for a symmetric PSD A.

    Cholesky first; a failed factorization (rank deficiency) falls back to the
    symmetric pseudo-inverse unless ``pinv`` is False.
    """
    A = np.asarray(A, dtype=np.float64)
    shift = ridge_shift(A, ridge)
    Areg = A + shift * np.eye(A.shape[0]) if shift else A
    try:
        c = scipy.linalg.cho_factor(Areg, lower=True, check_finite=False)
        # cho_factor accepts numerically semidefinite input; treat pivots below
        # the pinvh cutoff (n * eps relative, on the squared scale) as rank loss
        piv = np.abs(np.diag(c[0]))
        if piv.max() == 0 or (piv.min() / piv.max()) ** 2 <= A.shape[0] * np.finfo(float).eps:
            raise np.linalg.LinAlgError("rank deficient")
        return scipy.linalg.cho_solve(c, B, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        if not pinv:
            raise SingularKernelError("K-hat is singular; set a ridge or allow the pseudo-inverse") from exc
        return scipy.linalg.pinvh(Areg) @ B


@dataclass(frozen=True)
class PowerResult:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def power_iteration(A: np.ndarray, tol: float = 1e-8, maxiter: int = 10_000, seed: int = 0,
                    strict: bool = False) -> PowerResult:
    """Spectral norm (largest |eigenvalue|) of a symmetric matrix.

    The estimate is ||A v|| for the current unit iterate v; iteration stops when
    it changes by at most ``tol`` relative. On hitting ``maxiter`` the best
    estimate is returned with a warning, or RuntimeError is raised if ``strict``.
    """
    M = np.asarray(A, dtype=np.float64)
    v = np.random.default_rng(seed).standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, maxiter + 1):
        w = M @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return PowerResult(0.0, v, it, True)
        v = w / norm
        if it > 1 and abs(norm - est) <= tol * norm:
            return PowerResult(norm, v, it, True)
        est = norm
    msg = f"power iteration did not reach relative tolerance {tol} in {maxiter} steps"
    if strict:
        raise RuntimeError(msg)
    warnings.warn(msg, PowerIterationWarning, stacklevel=2)
    return PowerResult(est, v, maxiter, False)
