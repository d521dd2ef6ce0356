"""Landmark selection: uniform, diagonal, column-norm and k-means sampling.

The diagonal and column-norm strategies sort a per-column score and keep the
first m indices (largest scores, ties to the lower index). They are
deterministic and need the full kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import STREAM_SAMPLE, DataMatrix, make_rng
from .kernels import FullKernel

STRATEGIES = ("uniform", "diagonal", "column_norm", "kmeans")


@dataclass(frozen=True)
class SamplePlan:
    strategy: str = "uniform"
    m: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.m < 1:
            raise ValueError("m must be >= 1")


def _check(n: int, m: int) -> None:
    if not 1 <= m <= n:
        raise ValueError(f"sample size m={m} must lie in [1, n={n}]")


def uniform_sample(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """m distinct indices, uniform over all size-m subsets of range(n)."""
    _check(n, m)
    return rng.choice(n, size=m, replace=False).astype(np.int64)


def _top_m(scores: np.ndarray, m: int) -> np.ndarray:
    # stable sort on -score keeps the lower index first among ties
    return np.argsort(-scores, kind="stable")[:m].astype(np.int64)


def diagonal_sample(K: FullKernel | np.ndarray, m: int) -> np.ndarray:
    Km = K.matrix if isinstance(K, FullKernel) else np.asarray(K)
    _check(Km.shape[0], m)
    return _top_m(np.diag(Km).astype(np.float64), m)


def column_norm_sample(K: FullKernel | np.ndarray, m: int) -> np.ndarray:
    Km = K.matrix if isinstance(K, FullKernel) else np.asarray(K)
    _check(Km.shape[0], m)
    return _top_m(np.linalg.norm(Km, axis=0), m)


def kmeans_sample(X: DataMatrix, m: int, rng: np.random.Generator, maxiter: int = 10) -> np.ndarray:
    """Run k-means with m centers and return the data point nearest each center.

    Centers are visited in order; when a center's nearest point is already
    taken, its next-nearest free point is used.
    """
    from .clustering import SolverConfig, _centroids, kmeans

    _check(X.n, m)
    seed = int(rng.integers(2**63 - 1))
    res = kmeans(X, m, SolverConfig(maxiter=maxiter, seed=seed))
    centers = _centroids(X.values, res.membership.assign, m)
    taken = np.zeros(X.n, dtype=bool)
    out = np.empty(m, dtype=np.int64)
    for k in range(m):
        d = ((X.values - centers[k]) ** 2).sum(axis=1)
        d[taken] = np.inf
        i = int(np.argmin(d))
        out[k] = i
        taken[i] = True
    return out


def draw_sample(plan: SamplePlan, X: DataMatrix | None = None, K: FullKernel | None = None,
                n: int | None = None) -> np.ndarray:
    """Dispatch a SamplePlan to its strategy."""
    rng = make_rng(plan.seed, STREAM_SAMPLE)
    if plan.strategy == "uniform":
        size = n if n is not None else (X.n if X is not None else K.n)
        return uniform_sample(size, plan.m, rng)
    if plan.strategy in ("diagonal", "column_norm"):
        if K is None:
            raise ValueError(f"{plan.strategy} sampling needs the full kernel matrix")
        return diagonal_sample(K, plan.m) if plan.strategy == "diagonal" else column_norm_sample(K, plan.m)
    if X is None:
        raise ValueError("kmeans sampling needs the data matrix")
    return kmeans_sample(X, plan.m, rng)
