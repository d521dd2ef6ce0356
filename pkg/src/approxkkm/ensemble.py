"""MCLA consensus over several partitions of the same points.

Cluster indicator vectors from all partitions become vertices of a meta-graph
weighted by Jaccard similarity. The meta-graph is cut into C balanced
meta-clusters and each point joins the meta-cluster it is most associated with.
The graph cut is done in-repo (spectral embedding to seed C groups, then
balanced greedy growth by decreasing affinity) instead of calling METIS.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import Membership

log = logging.getLogger(__name__)


class DegenerateGraphWarning(UserWarning):
    pass


def jaccard(u, v) -> float:
    """u.v / (|u|^2 + |v|^2 - u.v) for binary vectors; 0 when both are all-zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    inter = float(u @ v)
    denom = float(u @ u + v @ v) - inter
    return inter / denom if denom > 0 else 0.0


@dataclass(frozen=True)
class MetaGraph:
    vertices: np.ndarray  # (rC, n) binary indicator rows
    weights: np.ndarray  # (rC, rC) Jaccard similarities
    r: int
    C: int


@dataclass(frozen=True)
class MetaClusters:
    groups: tuple[np.ndarray, ...]  # vertex ids per meta-cluster
    means: np.ndarray  # (C, n) association of each point with each meta-cluster


def build_meta_graph(partitions) -> MetaGraph:
    partitions = list(partitions)
    if not partitions:
        raise ValueError("need at least one partition")
    n, C = partitions[0].n, partitions[0].C
    for P in partitions:
        if P.n != n or P.C != C:
            raise ValueError(f"partitions disagree on (n, C): ({P.n}, {P.C}) vs ({n}, {C})")
    U = np.vstack([P.one_hot() for P in partitions])
    inter = U @ U.T
    sq = np.diag(inter)
    denom = sq[:, None] + sq[None, :] - inter
    W = np.divide(inter, denom, out=np.zeros_like(inter), where=denom > 0)
    return MetaGraph(U, W, len(partitions), C)


def _spectral_embedding(W: np.ndarray, dims: int) -> np.ndarray:
    deg = W.sum(axis=1)
    inv_sqrt = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    N = inv_sqrt[:, None] * W * inv_sqrt[None, :]
    _, vecs = scipy.linalg.eigh(N)
    Y = vecs[:, ::-1][:, :dims]
    norms = np.linalg.norm(Y, axis=1, keepdims=True)
    return np.divide(Y, norms, out=np.zeros_like(Y), where=norms > 0)


def partition_meta_graph(G: MetaGraph, C: int, rng: np.random.Generator) -> MetaClusters:
    """Split the rC vertices into C groups whose sizes differ by at most one.

    Seeds: the highest-degree vertex (random among ties), then repeatedly the
    vertex farthest, in the spectral embedding, from the seeds chosen so far.
    Remaining vertices are placed one at a time, always taking the
    (vertex, group) pair with the highest mean Jaccard weight among groups with
    room left; embedding similarity to the group seed breaks exact ties.
    """
    W = G.weights
    V = W.shape[0]
    if V < C:
        raise ValueError(f"meta-graph has {V} vertices, fewer than C={C}")
    base, extra = divmod(V, C)
    if not np.any(W):
        warnings.warn("meta-graph has no edges; returning an arbitrary balanced split",
                      DegenerateGraphWarning, stacklevel=2)
        groups = [np.arange(k, V, C) for k in range(C)]
        return MetaClusters(tuple(groups), _means(G, groups))

    Y = _spectral_embedding(W, C)
    deg = W.sum(axis=1)
    top = np.flatnonzero(deg == deg.max())
    seeds = [int(top[rng.integers(top.size)])]
    mind = np.linalg.norm(Y - Y[seeds[0]], axis=1)
    for _ in range(1, C):
        mind[seeds] = -1.0
        s = int(np.argmax(mind))
        seeds.append(s)
        mind = np.minimum(mind, np.linalg.norm(Y - Y[s], axis=1))

    label = np.full(V, -1)
    label[seeds] = np.arange(C)
    sizes = np.ones(C, dtype=np.int64)
    wsum = W[:, seeds].copy()  # total weight from each vertex to each group
    tie = Y @ Y[seeds].T
    at_ceiling = 0
    for _ in range(V - C):
        open_groups = (sizes < base) | ((sizes == base) & (at_ceiling < extra))
        free = label < 0
        aff = wsum / sizes[None, :]
        score = np.where(free[:, None] & open_groups[None, :], aff, -np.inf)
        best = score.max()
        cand = score == best
        key = np.where(cand, tie, -np.inf)
        v, g = np.unravel_index(int(np.argmax(key)), key.shape)
        label[v] = g
        sizes[g] += 1
        if extra and sizes[g] == base + 1:
            at_ceiling += 1
        wsum[:, g] += W[:, v]
    groups = [np.flatnonzero(label == k) for k in range(C)]
    return MetaClusters(tuple(groups), _means(G, groups))


def _means(G: MetaGraph, groups) -> np.ndarray:
    return np.vstack([G.vertices[g].mean(axis=0) for g in groups])


def consensus(mc: MetaClusters, rng: np.random.Generator) -> Membership:
    """Each point joins argmax_k of its association mu[k, i]; ties are broken at random."""
    mu = mc.means
    C, n = mu.shape
    best = mu.max(axis=0)
    tied = mu == best[None, :]
    keys = np.where(tied, rng.random((C, n)), -1.0)
    assign = np.argmax(keys, axis=0)
    out = Membership(assign, C)
    if out.empty_clusters:
        log.warning("consensus left meta-clusters %s without points", out.empty_clusters)
    return out


def mcla(partitions, C: int, rng: np.random.Generator) -> Membership:
    partitions = list(partitions)
    G = build_meta_graph(partitions)
    if G.C != C:
        raise ValueError(f"partitions have C={G.C}, asked for C={C}")
    return consensus(partition_meta_graph(G, C, rng), rng)
