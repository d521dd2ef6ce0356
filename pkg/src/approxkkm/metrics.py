"""Partition-quality measures: NMI, ANMI, ARI and clustering-error reduction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .core import Membership


def _labels(U) -> np.ndarray:
    return U.assign if isinstance(U, Membership) else np.asarray(U)


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # counts[i, j] = points with label i in a and label j in b

    @classmethod
    def of(cls, a, b) -> "ContingencyTable":
        a, b = _labels(a), _labels(b)
        if a.shape != b.shape:
            raise ValueError(f"partitions cover different point counts: {a.shape[0]} vs {b.shape[0]}")
        _, ia = np.unique(a, return_inverse=True)
        _, ib = np.unique(b, return_inverse=True)
        table = np.zeros((ia.max() + 1 if ia.size else 0, ib.max() + 1 if ib.size else 0), dtype=np.int64)
        np.add.at(table, (ia.ravel(), ib.ravel()), 1)
        return cls(table)

    @property
    def rows(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def cols(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def _is_relabeling(t: ContingencyTable) -> bool:
    return np.count_nonzero(t.counts) == t.counts.shape[0] == t.counts.shape[1]


def nmi(Ua, Ub) -> float:
    """Mutual information normalized by the geometric mean of the two entropies.

    Natural log. When either partition has a single populated cluster the
    entropy vanishes: returns 1 if both are single-cluster, else 0. Partitions
    equal up to relabeling score exactly 1.
    """
    t = ContingencyTable.of(Ua, Ub)
    if _is_relabeling(t):
        return 1.0
    n = t.n
    na, nb = t.rows, t.cols
    ha = -np.sum(na * np.log(na / n))
    hb = -np.sum(nb * np.log(nb / n))
    if len(na) == 1 or len(nb) == 1:
        return 1.0 if len(na) == len(nb) == 1 else 0.0
    i, j = np.nonzero(t.counts)
    nij = t.counts[i, j].astype(np.float64)
    mi = np.sum(nij * np.log(n * nij / (na[i] * nb[j])))
    return float(min(max(mi / np.sqrt(ha * hb), 0.0), 1.0))


def anmi(Uc, inputs) -> float:
    """Average NMI of a consensus partition against every input partition."""
    inputs = list(inputs)
    if not inputs:
        raise ValueError("anmi needs at least one input partition")
    return float(np.mean([nmi(Uc, U) for U in inputs]))


def ari(Ua, Ub) -> float:
    """Hubert-Arabie adjusted Rand index.

    If the chance-corrected denominator vanishes (e.g. both partitions put
    everything in one cluster) the result is 1 for identical partitions, else 0.
    """
    t = ContingencyTable.of(Ua, Ub)
    sum_ij = comb(t.counts, 2).sum()
    sum_a = comb(t.rows, 2).sum()
    sum_b = comb(t.cols, 2).sum()
    total = comb(t.n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0:
        return 1.0 if _is_relabeling(t) else 0.0
    return float((sum_ij - expected) / denom)


def error_reduction(initial_error: float, final_error: float) -> float:
    """(initial - final) / initial."""
    if not initial_error > 0:
        raise ValueError(f"initial clustering error must be > 0, got {initial_error}")
    return (initial_error - final_error) / initial_error
