"""Kernel functions and full / rectangular kernel matrix construction.

Every kernel entry is a pure function of its two points: dot products and
squared distances are accumulated feature by feature in a fixed order rather
than through BLAS. That makes K bit-exactly symmetric, makes a rectangular
block bit-identical to the matching columns of the full matrix, and keeps the
result independent of how row blocks are split across threads.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .core import DataMatrix

KINDS = ("linear", "rbf", "polynomial", "neural")

DEFAULT_MAX_FULL_N = 30_000


class MemoryBudgetError(RuntimeError):
    """The requested full kernel does not fit the configured budget."""


class KernelDiagonalWarning(UserWarning):
    """kappa(x, x) > 1 for some point; the error bounds assume diag(K) <= 1."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    sigma: float = 1.0
    degree: int = 3
    offset: float = 1.0
    a: float = 0.0045
    b: float = 0.11

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbf" and not self.sigma > 0:
            raise ValueError("rbf bandwidth sigma must be > 0")
        if self.kind == "polynomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError("polynomial degree must be an integer >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        keep = {
            "linear": (),
            "rbf": ("sigma",),
            "polynomial": ("degree", "offset"),
            "neural": ("a", "b"),
        }[self.kind]
        full = asdict(self)
        return {"kind": self.kind, **{k: full[k] for k in keep}}

    @property
    def bounded_diagonal(self) -> bool:
        """True when kappa(x, x) <= 1 holds for every x by construction."""
        return self.kind in ("rbf", "neural")


def _dot_block(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        out += np.multiply.outer(A[:, k], B[:, k])
    return out


def _sqdist_block(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        diff = np.subtract.outer(A[:, k], B[:, k])
        out += diff * diff
    return out


def _apply(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if spec.kind == "rbf":
        return np.exp(_sqdist_block(A, B) / (-2.0 * spec.sigma * spec.sigma))
    g = _dot_block(A, B)
    if spec.kind == "linear":
        return g
    if spec.kind == "polynomial":
        return (g + spec.offset) ** int(spec.degree)
    return np.tanh(spec.a * g + spec.b)


def pairwise(spec: KernelSpec, A, B, block_rows: int = 4096, workers: int = 1) -> np.ndarray:
    """Kernel values between the rows of A and the rows of B."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    starts = range(0, A.shape[0], block_rows)
    out = np.empty((A.shape[0], B.shape[0]))

    def fill(s):
        out[s:s + block_rows] = _apply(spec, A[s:s + block_rows], B)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, starts))
    else:
        for s in starts:
            fill(s)
    return out


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(_apply(spec, x[None, :], y[None, :])[0, 0])


def kernel_diagonal(spec: KernelSpec, X: DataMatrix | np.ndarray) -> np.ndarray:
    """kappa(x_i, x_i) for every point, in O(nd)."""
    V = X.values if isinstance(X, DataMatrix) else np.atleast_2d(np.asarray(X, dtype=np.float64))
    if spec.kind == "rbf":
        return np.ones(V.shape[0])
    sq = np.zeros(V.shape[0])
    for k in range(V.shape[1]):
        sq += V[:, k] * V[:, k]
    if spec.kind == "linear":
        return sq
    if spec.kind == "polynomial":
        return (sq + spec.offset) ** int(spec.degree)
    return np.tanh(spec.a * sq + spec.b)


def _warn_diag(spec: KernelSpec, diag: np.ndarray) -> None:
    if not spec.bounded_diagonal and diag.size and diag.max() > 1.0 + 1e-12:
        warnings.warn(
            f"{spec.kind} kernel has kappa(x,x) up to {diag.max():.4g} > 1; "
            "the clustering-error bounds assume diag(K) <= 1",
            KernelDiagonalWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class FullKernel:
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def is_psd(self) -> bool:
        """Advisory PSD check: smallest eigenvalue >= -1e-8 * tr(K) / n."""
        K = self.matrix
        lam_min = scipy.linalg.eigvalsh(K, subset_by_index=[0, 0])[0]
        return bool(lam_min >= -1e-8 * abs(np.trace(K)) / self.n)


@dataclass(frozen=True)
class RectKernel:
    KB: np.ndarray
    Khat: np.ndarray
    sample_indices: np.ndarray

    @property
    def n(self) -> int:
        return self.KB.shape[0]

    @property
    def m(self) -> int:
        return self.KB.shape[1]


def full_kernel(X: DataMatrix, spec: KernelSpec, max_n: int = DEFAULT_MAX_FULL_N,
                workers: int = 1) -> FullKernel:
    """n x n Gram matrix; upper triangle mirrored so K is exactly symmetric."""
    if X.n > max_n:
        raise MemoryBudgetError(
            f"full kernel for n={X.n} exceeds the budget of n<={max_n}; "
            "use the approximate (akkm) path, which only needs an n x m block"
        )
    K = pairwise(spec, X.values, X.values, workers=workers)
    iu = np.triu_indices(X.n, 1)
    K[(iu[1], iu[0])] = K[iu]
    _warn_diag(spec, np.diag(K))
    K.setflags(write=False)
    return FullKernel(K)


def check_indices(indices, n: int) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("sample indices must be a non-empty 1-D sequence")
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("sample indices must be integers")
    idx = idx.astype(np.int64)
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError(f"sample index out of range [0, {n})")
    if np.unique(idx).size != idx.size:
        raise ValueError("sample indices contain duplicates")
    return idx


def rect_kernel(X: DataMatrix, sample_indices, spec: KernelSpec, workers: int = 1) -> RectKernel:
    """K_B between all points and the sampled points; K-hat is cut out of K_B's rows."""
    idx = check_indices(sample_indices, X.n)
    KB = pairwise(spec, X.values, X.values[idx], workers=workers)
    Khat = KB[idx]
    _warn_diag(spec, np.diag(Khat))
    KB.setflags(write=False)
    Khat.setflags(write=False)
    return RectKernel(KB, Khat, idx)


def rect_from_full(K: FullKernel, sample_indices) -> RectKernel:
    idx = check_indices(sample_indices, K.n)
    KB = np.ascontiguousarray(K.matrix[:, idx])
    return RectKernel(KB, KB[idx], idx)
