"""Numerical checks of the clustering-error and Nystrom approximation-error bounds."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .clustering import clustering_objective
from .core import Membership, l2_normalize, make_rng
from .kernels import FullKernel
from .linalg import power_iteration, psd_solve, ridge_shift
from .sampling import uniform_sample


class VacuousBoundWarning(UserWarning):
    pass


class IndefiniteKernelWarning(UserWarning):
    pass


def _mat(K) -> np.ndarray:
    return K.matrix if isinstance(K, FullKernel) else np.asarray(K, dtype=np.float64)


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in descending order (negatives clipped to 0) and matching eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray
    clipped: int = 0

    @classmethod
    def of(cls, K) -> "EigenSystem":
        w, Z = scipy.linalg.eigh(_mat(K))
        w, Z = w[::-1].copy(), Z[:, ::-1].copy()
        neg = w < 0
        clipped = int(np.count_nonzero(w < -1e-12 * max(abs(w[0]), 1.0)))
        if clipped:
            warnings.warn(f"kernel has {clipped} negative eigenvalues; clipped to 0",
                          IndefiniteKernelWarning, stacklevel=2)
        w[neg] = 0.0
        return cls(w, Z, clipped)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def top(self, C: int) -> tuple[np.ndarray, np.ndarray]:
        return self.values[:C], self.vectors[:, :C]

    def trailing(self, C: int) -> tuple[np.ndarray, np.ndarray]:
        return self.values[C:], self.vectors[:, C:]


def restricted_loss(K, U: Membership, xi, ridge: float = 0.0) -> float:
    """Clustering error when centers may only use the points selected by the 0/1 mask xi.

    Each inner minimum over alpha_k has the closed form
    -u_k^T K_B K_S^{-1} K_B^T u_k / n_k, with K_B the selected columns and K_S
    the selected block (pseudo-inverse if K_S is singular and ridge is 0).
    """
    Km = _mat(K)
    mask = np.asarray(xi).astype(bool)
    if mask.shape != (Km.shape[0],):
        raise ValueError("mask length must equal n")
    if not mask.any():
        raise ValueError("the mask must select at least one point")
    KB = Km[:, mask]
    KS = KB[mask]
    onehot = U.one_hot()
    counts = onehot.sum(axis=1)
    P = onehot @ KB  # (C, m): u_k^T K_B
    sol = psd_solve(KS, P.T, ridge=ridge)
    quad = np.einsum("km,mk->k", P, sol)
    nz = counts > 0
    return float(np.trace(Km) - np.sum(quad[nz] / counts[nz]))


def expected_loss_bound(K, U: Membership, m: int) -> float:
    """Upper bound on the expected restricted loss under uniform sampling of m points.

    L(U, 1) + tr(U~ [K^{-1} + (m/n) diag(K)^{-1}]^{-1} U~^T), evaluated through the
    equivalent K - K (K + (n/m) diag(K))^{-1} K, which needs no inverse of K.
    """
    Km = _mat(K)
    n = Km.shape[0]
    d = np.diag(Km)
    if np.any(d <= 0):
        raise ValueError("the bound needs a strictly positive kernel diagonal")
    if not 1 <= m <= n:
        raise ValueError(f"m={m} must lie in [1, n={n}]")
    A = Km + (n / m) * np.diag(d)
    M = Km - Km @ scipy.linalg.solve(A, Km, assume_a="pos")
    Ut = l2_normalize(U, warn=False).rows
    return clustering_objective(Km, U) + float(np.sum((Ut @ M) * Ut))


def spectral_ratio_bound(eigs: EigenSystem, C: int, m: int, n: int | None = None) -> float:
    """Bound on E[L(U, xi)] / L(U, 1) from the spectrum alone; the tighter of the two forms.

    Returns +inf (with a warning) when tr(K) <= sum of the top C eigenvalues.
    """
    lam = eigs.values
    n = eigs.n if n is None else n
    top = lam[:C]
    rest = lam[C:].sum()
    slack = lam.sum() - top.sum()
    if slack <= 0:
        warnings.warn("tr(K) does not exceed the top-C eigenvalue mass; bound is vacuous",
                      VacuousBoundWarning, stacklevel=2)
        return math.inf
    first = 1.0 + float(np.sum(top / (1.0 + top * m / n))) / slack
    second = 1.0 + (C / m) / (rest / n) if rest > 0 else math.inf
    return min(first, second)


def coherence(eigs: EigenSystem, C: int, n: int | None = None, variant: str = "top") -> float:
    """Eigenvector coherence.

    ``top``: (n/C) max_i ||row_i(Z_1)||^2 over the top-C eigenvector block.
    ``trailing``: n max_i ||row_i(Z_2)||^2 over the remaining eigenvectors.
    """
    n = eigs.n if n is None else n
    if variant == "top":
        Z = eigs.vectors[:, :C]
        return float(n / C * np.max(np.sum(Z * Z, axis=1)))
    if variant == "trailing":
        Z = eigs.vectors[:, C:]
        return float(n * np.max(np.sum(Z * Z, axis=1))) if Z.shape[1] else 0.0
    raise ValueError(f"unknown coherence variant {variant!r}")


def nystrom_residual(K, sample_indices, ridge: float = 0.0) -> np.ndarray:
    """K - K_B (K-hat + ridge)^+ K_B^T, formed as K - G G^T with G = K_B V W^{-1/2}.

    Going through the eigendecomposition K-hat = V W V^T keeps the residual
    accurate when K-hat is nearly singular, where multiplying by an explicit
    (pseudo-)inverse loses about cond(K-hat) * eps.
    """
    Km = _mat(K)
    idx = np.asarray(sample_indices, dtype=np.int64)
    KB = Km[:, idx]
    Khat = KB[idx]
    w, V = scipy.linalg.eigh(Khat)
    w = w + ridge_shift(Khat, ridge)
    keep = w > max(w.max(), 0.0) * idx.size * np.finfo(float).eps
    G = KB @ (V[:, keep] / np.sqrt(w[keep]))
    R = Km - G @ G.T
    return 0.5 * (R + R.T)


def nystrom_error(K, sample_indices, ridge: float = 0.0, tol: float = 1e-8,
                  maxiter: int = 10_000) -> float:
    """||K - K_B (K-hat + ridge)^{-1} K_B^T||_2 by power iteration on the residual."""
    return power_iteration(nystrom_residual(K, sample_indices, ridge), tol=tol, maxiter=maxiter).value


def nystrom_error_bound(lam_next: float, tau: float, C: int, n: int, m: int, delta: float) -> float:
    """lambda_{C+1} (1 + 8 tau ln(2/delta) sqrt(C n / m))."""
    return lam_next * (1.0 + 8.0 * tau * math.log(2.0 / delta) * math.sqrt(C * n / m))


@dataclass
class BoundReport:
    n: int
    m: int
    C: int
    delta: float
    trials: int
    lambda_next: float
    coherence_top: float
    coherence_trailing: float
    rhs: float
    rhs_trailing: float
    errors: list[float] = field(default_factory=list)
    median_error: float = 0.0
    quantiles: dict = field(default_factory=dict)
    fraction_within_rhs: float = 0.0
    sample_condition_met: bool = False
    sample_condition_threshold: float = 0.0
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def nystrom_bound_report(K, C: int, m: int, delta: float = 0.1, trials: int = 50,
                         rng: np.random.Generator | None = None, eigs: EigenSystem | None = None,
                         c1: float = 1.0, c2: float = 1.0, ridge: float = 0.0) -> BoundReport:
    """Empirical Nystrom errors under uniform sampling against the coherence-based bound.

    Each trial draws from its own child generator, so results do not depend on
    the order in which trials are evaluated. The sample-size condition
    m >= tau C max(c1 ln C, c2 ln(3/delta)) is reported for the given
    constants, never enforced.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    Km = _mat(K)
    n = Km.shape[0]
    eigs = eigs if eigs is not None else EigenSystem.of(Km)
    rng = rng if rng is not None else make_rng(0)
    lam_next = float(eigs.values[C]) if C < n else 0.0
    tau = coherence(eigs, C, n, "top")
    tau_tr = coherence(eigs, C, n, "trailing")
    rhs = nystrom_error_bound(lam_next, tau, C, n, m, delta)
    children = rng.spawn(trials)
    errors = [nystrom_error(Km, uniform_sample(n, m, g), ridge=ridge) for g in children]
    errs = np.asarray(errors)
    threshold = tau * C * max(c1 * math.log(C), c2 * math.log(3.0 / delta))
    return BoundReport(
        n=n, m=m, C=C, delta=delta, trials=trials,
        lambda_next=lam_next,
        coherence_top=tau,
        coherence_trailing=tau_tr,
        rhs=rhs,
        rhs_trailing=nystrom_error_bound(lam_next, tau_tr, C, n, m, delta),
        errors=[float(e) for e in errs],
        median_error=float(np.median(errs)),
        quantiles={q: float(np.quantile(errs, float(q))) for q in ("0.1", "0.5", "0.9")},
        fraction_within_rhs=float(np.mean(errs <= rhs)),
        sample_condition_met=bool(m >= threshold),
        sample_condition_threshold=float(threshold),
        constants={"c1": c1, "c2": c2},
    )


def expected_loss_monte_carlo(K, U: Membership, m: int, masks: int = 500,
                         rng: np.random.Generator | None = None, ridge: float = 0.0) -> dict:
    """Mean and standard error of restricted_loss over uniform size-m masks, next to the bound."""
    Km = _mat(K)
    n = Km.shape[0]
    rng = rng if rng is not None else make_rng(0)
    vals = np.empty(masks)
    for t, g in enumerate(rng.spawn(masks)):
        xi = np.zeros(n, dtype=bool)
        xi[uniform_sample(n, m, g)] = True
        vals[t] = restricted_loss(Km, U, xi, ridge=ridge)
    return {
        "mean": float(vals.mean()),
        "stderr": float(vals.std(ddof=1) / math.sqrt(masks)) if masks > 1 else 0.0,
        "bound": expected_loss_bound(Km, U, m),
        "full_error": clustering_objective(Km, U),
        "masks": masks,
        "m": m,
    }

