"""Shared data containers: data matrices, hard memberships and their normalized views."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class EmptyClusterWarning(UserWarning):
    """Raised (as a warning) when a membership has clusters with no points."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataMatrix:
    """n points in d dimensions, optionally with ground-truth labels."""

    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"expected a non-empty n x d matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("data matrix contains non-finite entries")
        object.__setattr__(self, "values", _frozen(values))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise ValueError(f"labels have shape {labels.shape}, expected ({values.shape[0]},)")
            object.__setattr__(self, "labels", _frozen(labels))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Membership:
    """Hard assignment of n points to C clusters, stored as an id vector.

    The C x n one-hot matrix U is only materialized on request via :meth:`one_hot`.
    """

    assign: np.ndarray
    C: int

    def __post_init__(self):
        assign = np.asarray(self.assign)
        if assign.ndim != 1:
            raise ValueError("assignment must be a 1-D vector")
        if assign.size and not np.issubdtype(assign.dtype, np.integer):
            if not np.all(assign == np.round(assign)):
                raise ValueError("assignment entries must be integers")
        assign = assign.astype(np.int64)
        C = int(self.C)
        if C < 1:
            raise ValueError("C must be >= 1")
        if assign.size and (assign.min() < 0 or assign.max() >= C):
            raise ValueError(f"cluster ids must lie in [0, {C})")
        object.__setattr__(self, "assign", _frozen(assign))
        object.__setattr__(self, "C", C)

    @classmethod
    def from_labels(cls, labels) -> "Membership":
        """Relabel arbitrary hashable labels onto 0..C-1 (sorted order of unique values)."""
        uniq, inv = np.unique(np.asarray(labels), return_inverse=True)
        return cls(inv.ravel(), len(uniq))

    @property
    def n(self) -> int:
        return self.assign.shape[0]

    def counts(self) -> np.ndarray:
        return np.bincount(self.assign, minlength=self.C)

    @property
    def empty_clusters(self) -> tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(self.counts() == 0))

    def one_hot(self) -> np.ndarray:
        U = np.zeros((self.C, self.n))
        U[self.assign, np.arange(self.n)] = 1.0
        return U

    def __eq__(self, other):
        if not isinstance(other, Membership):
            return NotImplemented
        return self.C == other.C and np.array_equal(self.assign, other.assign)

    def __hash__(self):
        return hash((self.C, self.assign.tobytes()))


@dataclass(frozen=True)
class NormalizedMembership:
    rows: np.ndarray
    mode: str
    empty: tuple[int, ...] = field(default=())


def _normalize(U: Membership, mode: str, warn: bool) -> NormalizedMembership:
    counts = U.counts().astype(np.float64)
    scale = counts if mode == "l1" else np.sqrt(counts)
    inv = np.zeros_like(scale)
    nz = scale > 0
    inv[nz] = 1.0 / scale[nz]
    rows = np.zeros((U.C, U.n))
    rows[U.assign, np.arange(U.n)] = inv[U.assign]
    empty = U.empty_clusters
    if empty and warn:
        warnings.warn(f"empty clusters {empty} normalized to zero rows", EmptyClusterWarning, stacklevel=3)
    return NormalizedMembership(_frozen(rows), mode, empty)


def l1_normalize(U: Membership, warn: bool = True) -> NormalizedMembership:
    """Rows of U divided by the cluster sizes n_k (empty clusters stay zero)."""
    return _normalize(U, "l1", warn)


def l2_normalize(U: Membership, warn: bool = True) -> NormalizedMembership:
    """Rows of U divided by sqrt(n_k); orthonormal rows when no cluster is empty."""
    return _normalize(U, "l2", warn)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for a (seed, stream) pair; streams are statistically independent.

    PCG64 seeded through SeedSequence is platform independent, so a given pair
    always replays the same draws.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


# fixed stream ids so that sampling, initialization and tie-breaking never share draws
STREAM_SAMPLE = 1
STREAM_INIT = 2
STREAM_TIES = 3
STREAM_DATA = 4
STREAM_ENSEMBLE = 5
