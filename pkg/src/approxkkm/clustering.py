"""Euclidean k-means, full kernel k-means, two-step and approximate kernel k-means,
the two center-coefficient solvers, and the Nystrom spectral-clustering baseline.

All argmins break ties toward the lowest cluster index (``np.argmin`` semantics),
so runs are deterministic given the initial membership.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .core import STREAM_INIT, STREAM_SAMPLE, DataMatrix, Membership, make_rng
from .kernels import (
    FullKernel,
    KernelSpec,
    RectKernel,
    kernel_diagonal,
    rect_kernel,
)
from .linalg import power_iteration, psd_solve, ridge_shift

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before meeting its tolerance."""


@dataclass(frozen=True)
class SolverConfig:
    maxiter: int = 100
    alpha_solver: str = "direct"  # or "gd"
    gd_eps: float = 1e-8
    gd_maxiter: int = 100_000
    ridge: float = 1e-8
    init: Membership | None = None
    empty_cluster_policy: str = "reassign_farthest"  # or "reseed_random"
    seed: int = 0
    record_memberships: bool = False

    def __post_init__(self):
        if self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")
        if self.alpha_solver not in ("direct", "gd"):
            raise ValueError(f"unknown alpha solver {self.alpha_solver!r}")
        if not 0 < self.gd_eps < 1:
            raise ValueError("gd_eps must lie in (0, 1)")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.empty_cluster_policy not in ("reassign_farthest", "reseed_random"):
            raise ValueError(f"unknown empty-cluster policy {self.empty_cluster_policy!r}")


@dataclass
class ClusterResult:
    membership: Membership
    objective_trace: list[float]
    iterations: int
    converged: bool
    empty_cluster_repairs: int = 0
    history: list[Membership] = field(default_factory=list)
    sample_indices: np.ndarray | None = None
    objective_offset: float = 0.0
    alpha: np.ndarray | None = None


@dataclass(frozen=True)
class CenterCoefficients:
    """Cluster centers c_k = sum_i alpha[k, i] kappa(x_hat_i, .)."""

    alpha: np.ndarray
    objective_trace: tuple[float, ...] = ()
    iterations: int = 0
    step_changes: tuple[float, ...] = ()  # exact objective change of each gd step

    @property
    def C(self) -> int:
        return self.alpha.shape[0]

    @property
    def m(self) -> int:
        return self.alpha.shape[1]


def random_membership(n: int, C: int, rng: np.random.Generator) -> Membership:
    """Uniform random label per point, redrawn until no cluster is empty."""
    if C > n:
        raise ValueError(f"cannot populate C={C} clusters with n={n} points")
    while True:
        assign = rng.integers(0, C, size=n)
        if np.bincount(assign, minlength=C).min() > 0:
            return Membership(assign, C)


def _init_membership(n: int, C: int, cfg: SolverConfig) -> Membership:
    if cfg.init is not None:
        if cfg.init.n != n or cfg.init.C != C:
            raise ValueError(f"initial membership has (n, C)=({cfg.init.n}, {cfg.init.C}), expected ({n}, {C})")
        return cfg.init
    return random_membership(n, C, make_rng(cfg.seed, STREAM_INIT))


def _l1_rows(assign: np.ndarray, C: int) -> np.ndarray:
    n = assign.shape[0]
    counts = np.bincount(assign, minlength=C).astype(np.float64)
    inv = np.divide(1.0, counts, out=np.zeros(C), where=counts > 0)
    rows = np.zeros((C, n))
    rows[assign, np.arange(n)] = inv[assign]
    return rows


def _repair_empty(assign: np.ndarray, C: int, point_dist: np.ndarray, policy: str,
                  rng: np.random.Generator) -> int:
    """Give each empty cluster one point, in place; returns how many were repaired.

    ``point_dist[i]`` is the distance of point i to its current center. Only
    points whose cluster keeps at least one other member are eligible.
    """
    repairs = 0
    dist = point_dist.astype(np.float64).copy()
    while True:
        counts = np.bincount(assign, minlength=C)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return repairs
        eligible = counts[assign] > 1
        if not eligible.any():
            raise ValueError("cannot repair empty clusters: fewer points than clusters")
        if policy == "reassign_farthest":
            cand = np.where(eligible, dist, -np.inf)
            i = int(np.argmax(cand))
        else:
            i = int(rng.choice(np.flatnonzero(eligible)))
        assign[i] = empty[0]
        dist[i] = -np.inf
        repairs += 1


# --------------------------------------------------------------------------- k-means

def kmeans_pp_seeds(V: np.ndarray, C: int, rng: np.random.Generator) -> np.ndarray:
    n = V.shape[0]
    centers = np.empty((C, V.shape[1]))
    centers[0] = V[rng.integers(n)]
    d2 = ((V - centers[0]) ** 2).sum(axis=1)
    for k in range(1, C):
        total = d2.sum()
        if total > 0:
            i = rng.choice(n, p=d2 / total)
        else:
            i = rng.integers(n)
        centers[k] = V[i]
        d2 = np.minimum(d2, ((V - centers[k]) ** 2).sum(axis=1))
    return centers


def _sqdist_to(V: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((V[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans(X: DataMatrix | np.ndarray, C: int, cfg: SolverConfig = SolverConfig()) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding (or ``cfg.init``).

    The trace records sum of squared distances after each center update, so it
    is non-increasing.
    """
    V = X.values if isinstance(X, DataMatrix) else np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = V.shape[0]
    if C > n:
        raise ValueError(f"C={C} exceeds n={n}")
    rng = make_rng(cfg.seed, STREAM_INIT)
    if cfg.init is not None:
        assign = _init_membership(n, C, cfg).assign.copy()
        centers = _centroids(V, assign, C)
    else:
        centers = kmeans_pp_seeds(V, C, rng)
        assign = np.argmin(_sqdist_to(V, centers), axis=1)
    trace, history = [], []
    repairs = 0
    converged = False
    it = 0
    for it in range(1, cfg.maxiter + 1):
        d = _sqdist_to(V, centers)
        repairs += _repair_empty(assign, C, d[np.arange(n), assign], cfg.empty_cluster_policy, rng)
        centers = _centroids(V, assign, C)
        d = _sqdist_to(V, centers)
        trace.append(float(d[np.arange(n), assign].sum()))
        if cfg.record_memberships:
            history.append(Membership(assign, C))
        new = np.argmin(d, axis=1)
        if np.array_equal(new, assign):
            converged = True
            break
        assign = new
    return ClusterResult(Membership(assign, C), trace, it, converged, repairs, history)


def _centroids(V: np.ndarray, assign: np.ndarray, C: int) -> np.ndarray:
    counts = np.bincount(assign, minlength=C).astype(np.float64)
    sums = np.zeros((C, V.shape[1]))
    np.add.at(sums, assign, V)
    out = np.zeros_like(sums)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


# --------------------------------------------------------------------------- kernel k-means

def clustering_objective(K: FullKernel | np.ndarray, U: Membership) -> float:
    """tr(K) - tr(U~ K U~^T): the within-cluster squared distance in feature space."""
    Km = K.matrix if isinstance(K, FullKernel) else np.asarray(K)
    if Km.shape != (U.n, U.n):
        raise ValueError("kernel and membership sizes disagree")
    return float(np.trace(Km) - _between_term(Km, U.assign, U.C))


def _between_term(Km: np.ndarray, assign: np.ndarray, C: int) -> float:
    # sum_k u_k^T K u_k / n_k == tr(U~ K U~^T)
    total = 0.0
    for k in range(C):
        members = np.flatnonzero(assign == k)
        if members.size:
            total += Km[np.ix_(members, members)].sum() / members.size
    return total


def kernel_kmeans(K: FullKernel | np.ndarray, C: int, cfg: SolverConfig = SolverConfig()) -> ClusterResult:
    """Kernel k-means on a full Gram matrix.

    Point i moves to argmin_k  u^_k^T K u^_k - 2 (K u^_k)_i ; the constant K_ii is
    dropped from the rule. The trace holds tr(K) - tr(U~ K U~^T) of the
    membership each assignment step starts from.
    """
    Km = K.matrix if isinstance(K, FullKernel) else np.asarray(K, dtype=np.float64)
    n = Km.shape[0]
    if C > n:
        raise ValueError(f"C={C} exceeds n={n}")
    assign = _init_membership(n, C, cfg).assign.copy()
    rng = make_rng(cfg.seed, STREAM_INIT)
    trK = float(np.trace(Km))
    diag = np.diag(Km)
    trace, history = [], []
    repairs = 0
    converged = False
    it = 0
    for it in range(1, cfg.maxiter + 1):
        Uhat = _l1_rows(assign, C)
        KU = Km @ Uhat.T
        quad = np.einsum("kn,nk->k", Uhat, KU)
        scores = quad[None, :] - 2.0 * KU
        if np.bincount(assign, minlength=C).min() == 0:
            pd = diag + scores[np.arange(n), assign]
            repairs += _repair_empty(assign, C, pd, cfg.empty_cluster_policy, rng)
            Uhat = _l1_rows(assign, C)
            KU = Km @ Uhat.T
            quad = np.einsum("kn,nk->k", Uhat, KU)
            scores = quad[None, :] - 2.0 * KU
        trace.append(trK - _between_from(KU, assign, C))
        if cfg.record_memberships:
            history.append(Membership(assign, C))
        new = np.argmin(scores, axis=1)
        if np.array_equal(new, assign):
            converged = True
            break
        assign = new
    return ClusterResult(Membership(assign, C), trace, it, converged, repairs, history)


def _between_from(KU: np.ndarray, assign: np.ndarray, C: int) -> float:
    # u_k^T K u^_k summed over k, with KU = K U^^T
    n = assign.shape[0]
    return float(KU[np.arange(n), assign].sum())


# --------------------------------------------------------------------------- center coefficients

def _uhat_array(Uhat) -> np.ndarray:
    return np.asarray(getattr(Uhat, "rows", Uhat), dtype=np.float64)


def solve_alpha_direct(Uhat, KB: np.ndarray, Khat: np.ndarray, ridge: float = 0.0,
                       pinv: bool = True) -> CenterCoefficients:
    """alpha = U^ K_B (K-hat + ridge * tr(K-hat)/m * I)^{-1}, via Cholesky (pinv fallback)."""
    B = _uhat_array(Uhat) @ KB
    alpha = psd_solve(Khat, B.T, ridge=ridge, pinv=pinv).T
    return CenterCoefficients(np.ascontiguousarray(alpha))


def alpha_objective(alpha: np.ndarray, Khat: np.ndarray, B: np.ndarray) -> float:
    """1/2 tr(alpha K-hat alpha^T) - tr(B alpha^T) with B = U^ K_B."""
    return float(0.5 * np.sum((alpha @ Khat) * alpha) - np.sum(B * alpha))


def solve_alpha_gd(Uhat, KB: np.ndarray, Khat: np.ndarray, eps: float = 1e-8,
                   alpha0: np.ndarray | None = None, ridge: float = 0.0,
                   maxiter: int = 100_000, lipschitz: float | None = None) -> CenterCoefficients:
    """Gradient descent on 1/2 tr(alpha K alpha^T) - tr(U^ K_B alpha^T).

    Step 1/L with L the power-iteration estimate of lambda_max(K-hat). Stops
    once ||grad|| <= eps * ||U^ K_B||, the gradient norm at alpha = 0; measuring
    against a fixed reference lets a warm start finish early. Each accepted step lowers the
    objective; if an under-estimated L makes a step non-descending, the step is
    halved and retried. The returned trace is tracked through the exact change
    of the quadratic per step, which avoids cancellation near the optimum.
    """
    B = _uhat_array(Uhat) @ KB
    shift = ridge_shift(Khat, ridge)
    A = Khat + shift * np.eye(Khat.shape[0]) if shift else np.asarray(Khat)
    if lipschitz is None:
        lipschitz = power_iteration(A, tol=1e-10, maxiter=10_000).value
    if lipschitz <= 0:
        raise ValueError("K-hat has no positive eigenvalue")
    step = 1.0 / lipschitz
    alpha = np.zeros_like(B) if alpha0 is None else np.array(alpha0, dtype=np.float64)
    G = alpha @ A - B
    g0 = float(np.linalg.norm(B))
    f = alpha_objective(alpha, A, B)
    trace, changes = [f], []
    if g0 == 0.0 or np.linalg.norm(G) <= eps * g0:
        return CenterCoefficients(alpha, tuple(trace), 0)
    for it in range(1, maxiter + 1):
        gg = float(np.sum(G * G))
        GA = G @ A
        gAg = float(np.sum(GA * G))
        while True:
            delta = -step * gg + 0.5 * step * step * gAg
            if delta < 0:
                break
            step *= 0.5
        alpha = alpha - step * G
        G = G - step * GA
        f += delta
        trace.append(f)
        changes.append(delta)
        if np.linalg.norm(G) <= eps * g0:
            return CenterCoefficients(alpha, tuple(trace), it, tuple(changes))
    raise ConvergenceError(
        f"gradient descent did not reach relative gradient norm {eps} in {maxiter} steps; "
        "K-hat is probably ill-conditioned, use the direct solver with a ridge"
    )


# --------------------------------------------------------------------------- approximate kernel k-means

def approx_kkm(X: DataMatrix, spec: KernelSpec, sample_indices, C: int,
               cfg: SolverConfig = SolverConfig(), rect: RectKernel | None = None) -> ClusterResult:
    """Approximate kernel k-means: centers restricted to the span of the sampled points.

    Only the n x m block K_B is formed. With the direct solver T = K_B K-hat^{-1}
    is computed once and alpha = U^ T per iteration; the gd solver re-solves for
    alpha each iteration, warm-started from the previous alpha. Point i moves to
    argmin_k alpha_k^T K-hat alpha_k - 2 phi_i^T alpha_k (phi_i = row i of K_B).

    ``objective_trace`` holds sum_k (n_k alpha_k^T K-hat alpha_k - 2 u_k^T K_B alpha_k)
    and ``objective_offset`` the constant tr(K); their sum is the clustering error
    with centers restricted to the sampled span.
    """
    rk = rect if rect is not None else rect_kernel(X, sample_indices, spec)
    return _approx_from_rect(rk, C, cfg, kernel_diagonal(spec, X))


def approx_kkm_from_rect(rect: RectKernel, C: int, cfg: SolverConfig = SolverConfig(),
                         diag: np.ndarray | None = None) -> ClusterResult:
    """approx_kkm on a precomputed K_B / K-hat pair (``diag`` = kappa(x_i, x_i), optional)."""
    return _approx_from_rect(rect, C, cfg, diag)


def _approx_from_rect(rk: RectKernel, C: int, cfg: SolverConfig, diag) -> ClusterResult:
    KB, Khat = rk.KB, rk.Khat
    n, m = KB.shape
    if m < C:
        raise ValueError(f"sample size m={m} is smaller than C={C}")
    shift = ridge_shift(Khat, cfg.ridge)
    Kreg = Khat + shift * np.eye(m) if shift else np.asarray(Khat)
    T = None
    lip = None
    if cfg.alpha_solver == "direct":
        T = psd_solve(Khat, KB.T, ridge=cfg.ridge).T
    else:
        lip = power_iteration(Kreg, tol=1e-10).value
    assign = _init_membership(n, C, cfg).assign.copy()
    rng = make_rng(cfg.seed, STREAM_INIT)
    if diag is None:
        diag = np.zeros(n)
    trace, history = [], []
    repairs = 0
    converged = False
    alpha = None
    it = 0

    def centers(assign, alpha_prev):
        Uhat = _l1_rows(assign, C)
        if T is not None:
            a = Uhat @ T
        else:
            a = solve_alpha_gd(Uhat, KB, Khat, eps=cfg.gd_eps, alpha0=alpha_prev, ridge=cfg.ridge,
                               maxiter=cfg.gd_maxiter, lipschitz=lip).alpha
        lin = KB @ a.T
        quad = np.einsum("km,mj,kj->k", a, Kreg, a)
        return a, lin, quad

    for it in range(1, cfg.maxiter + 1):
        alpha, lin, quad = centers(assign, alpha)
        scores = quad[None, :] - 2.0 * lin
        if np.bincount(assign, minlength=C).min() == 0:
            pd = diag + scores[np.arange(n), assign]
            repairs += _repair_empty(assign, C, pd, cfg.empty_cluster_policy, rng)
            alpha, lin, quad = centers(assign, alpha)
            scores = quad[None, :] - 2.0 * lin
        counts = np.bincount(assign, minlength=C)
        trace.append(float(counts @ quad - 2.0 * lin[np.arange(n), assign].sum()))
        if cfg.record_memberships:
            history.append(Membership(assign, C))
        new = np.argmin(scores, axis=1)
        if np.array_equal(new, assign):
            converged = True
            break
        assign = new
    return ClusterResult(Membership(assign, C), trace, it, converged, repairs, history,
                         rk.sample_indices, float(np.sum(diag)), alpha)


# --------------------------------------------------------------------------- two-step kernel k-means

def two_step_kkm(X: DataMatrix, spec: KernelSpec, m: int, C: int, cfg: SolverConfig = SolverConfig(),
                 sample_indices=None) -> ClusterResult:
    """Kernel k-means on m sampled points, then one nearest-center pass over all n.

    ``cfg.init`` may be given over the m samples or over all n points (it is then
    restricted to the sampled ones).
    """
    if m < C:
        raise ValueError(f"sample size m={m} is smaller than C={C}")
    if sample_indices is None:
        from .sampling import uniform_sample
        sample_indices = uniform_sample(X.n, m, make_rng(cfg.seed, STREAM_SAMPLE))
    rk = rect_kernel(X, sample_indices, spec)
    if rk.m != m:
        raise ValueError(f"got {rk.m} sample indices for m={m}")
    return two_step_from_rect(rk, C, cfg)


def two_step_from_rect(rk: RectKernel, C: int, cfg: SolverConfig = SolverConfig()) -> ClusterResult:
    """Two-step kernel k-means on a precomputed K_B / K-hat pair."""
    if rk.m < C:
        raise ValueError(f"sample size m={rk.m} is smaller than C={C}")
    inner_cfg = cfg
    if cfg.init is not None and cfg.init.n == rk.n and rk.n != rk.m:
        inner_cfg = replace(cfg, init=Membership(cfg.init.assign[rk.sample_indices], C))
    inner = kernel_kmeans(rk.Khat, C, inner_cfg)
    # centers are fixed after the sample-only run
    Uhat = _l1_rows(inner.membership.assign, C)
    lin = rk.KB @ Uhat.T
    quad = np.einsum("km,mj,kj->k", Uhat, rk.Khat, Uhat)
    assign = np.argmin(quad[None, :] - 2.0 * lin, axis=1)
    return ClusterResult(Membership(assign, C), inner.objective_trace, inner.iterations, inner.converged,
                         inner.empty_cluster_repairs, inner.history, rk.sample_indices)


def restricted_objective(rk: RectKernel, U: Membership, ridge: float = 0.0) -> float:
    """sum_k (n_k alpha_k^T K-hat alpha_k - 2 u_k^T K_B alpha_k) at the optimal alpha for U.

    Add tr(K) to obtain the clustering error with centers restricted to the sampled span.
    """
    shift = ridge_shift(rk.Khat, ridge)
    Kreg = rk.Khat + shift * np.eye(rk.m) if shift else rk.Khat
    alpha = solve_alpha_direct(_l1_rows(U.assign, U.C), rk.KB, rk.Khat, ridge=ridge).alpha
    quad = np.einsum("km,mj,kj->k", alpha, Kreg, alpha)
    lin = rk.KB @ alpha.T
    return float(U.counts() @ quad - 2.0 * lin[np.arange(U.n), U.assign].sum())


# --------------------------------------------------------------------------- Nystrom spectral clustering

class SpectrumError(ValueError):
    """Fewer than C positive eigenvalues in the Nystrom approximation."""


def nystrom_embedding(KB: np.ndarray, Khat: np.ndarray, C: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-C eigenpairs of K_B K-hat^+ K_B^T without forming the n x n matrix.

    With K-hat = V W V^T and G = K_B V W^{-1/2}, the approximation is G G^T, so
    its eigenvectors are G Q M^{-1/2} where G^T G = Q M Q^T.
    """
    w, V = scipy.linalg.eigh(Khat)
    keep = w > w.max() * Khat.shape[0] * np.finfo(float).eps
    G = KB @ (V[:, keep] / np.sqrt(w[keep]))
    mu, Q = scipy.linalg.eigh(G.T @ G)
    order = np.argsort(mu)[::-1]
    mu, Q = mu[order], Q[:, order]
    tol = max(mu[0], 0.0) * max(G.shape) * np.finfo(float).eps if mu.size else 0.0
    if mu.size < C or mu[C - 1] <= tol:
        raise SpectrumError(f"the Nystrom approximation has fewer than C={C} positive eigenvalues")
    E = G @ (Q[:, :C] / np.sqrt(mu[:C]))
    return E, mu[:C]


def nystrom_spectral(KB: np.ndarray, Khat: np.ndarray, C: int,
                     cfg: SolverConfig = SolverConfig()) -> ClusterResult:
    """Cluster the row-normalized top-C Nystrom eigenvectors with Euclidean k-means."""
    if KB.shape[1] < C:
        raise ValueError(f"sample size m={KB.shape[1]} is smaller than C={C}")
    E, _ = nystrom_embedding(KB, Khat, C)
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    E = np.divide(E, norms, out=np.zeros_like(E), where=norms > 0)
    return kmeans(E, C, replace(cfg, init=None))
