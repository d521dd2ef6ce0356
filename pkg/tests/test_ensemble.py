import itertools

import numpy as np
import pytest

from approxkkm.clustering import random_membership
from approxkkm.core import Membership, make_rng
from approxkkm.ensemble import (
    DegenerateGraphWarning,
    MetaClusters,
    MetaGraph,
    build_meta_graph,
    consensus,
    jaccard,
    mcla,
    partition_meta_graph,
)
from approxkkm.metrics import anmi, nmi


def _relabelled(U, rng):
    return Membership(rng.permutation(U.C)[U.assign], U.C)


class TestJaccard:
    def test_identical(self):
        assert jaccard([1, 0, 1], [1, 0, 1]) == 1.0

    def test_disjoint(self):
        assert jaccard([1, 1, 0], [0, 0, 1]) == 0.0

    def test_half(self):
        assert jaccard([1, 1, 0], [1, 0, 0]) == 0.5

    def test_both_empty(self):
        assert jaccard([0, 0], [0, 0]) == 0.0


class TestMetaGraph:
    def test_single_partition_identity(self):
        G = build_meta_graph([Membership([0, 1, 1, 2], 3)])
        np.testing.assert_array_equal(G.weights, np.eye(3))

    def test_identical_partitions_blocks_are_permutations(self):
        rng = make_rng(0)
        U = random_membership(30, 3, rng)
        G = build_meta_graph([U, _relabelled(U, rng), _relabelled(U, rng)])
        for a, b in itertools.product(range(3), repeat=2):
            block = G.weights[3 * a:3 * a + 3, 3 * b:3 * b + 3]
            assert set(np.unique(block)) <= {0.0, 1.0}
            np.testing.assert_array_equal(block.sum(axis=0), 1.0)
            np.testing.assert_array_equal(block.sum(axis=1), 1.0)

    def test_set_overlap_oracle(self):
        rng = make_rng(1)
        parts = [Membership(rng.integers(0, 3, 20), 3) for _ in range(2)]
        G = build_meta_graph(parts)
        sets = [set(np.flatnonzero(P.assign == k)) for P in parts for k in range(3)]
        for i, j in itertools.product(range(6), repeat=2):
            union = sets[i] | sets[j]
            want = len(sets[i] & sets[j]) / len(union) if union else 0.0
            assert G.weights[i, j] == pytest.approx(want, rel=1e-15)

    def test_mismatched_partitions(self):
        with pytest.raises(ValueError):
            build_meta_graph([Membership([0, 1], 2), Membership([0, 1, 1], 2)])


class TestPartition:
    def test_identical_partitions_group_copies(self):
        rng = make_rng(2)
        for r, C in [(2, 2), (3, 3), (4, 4)]:
            U = random_membership(40, C, rng)
            parts = [_relabelled(U, rng) for _ in range(r)]
            G = build_meta_graph(parts)
            mc = partition_meta_graph(G, C, rng)
            for group in mc.groups:
                assert len(group) == r
                rows = G.vertices[group]
                assert np.all(rows == rows[0])

    def test_exhaustive_balanced_r2_c2(self):
        # brute force over all balanced splits of the four vertices
        rng = make_rng(3)
        U = random_membership(12, 2, rng)
        G = build_meta_graph([U, _relabelled(U, rng)])
        def cut(groups):
            return sum(G.weights[a, b] for g in groups for a in g for b in g if a != b)
        best = max((cut([list(s), [v for v in range(4) if v not in s]]), s)
                   for s in itertools.combinations(range(4), 2))
        mc = partition_meta_graph(G, 2, rng)
        assert cut([list(g) for g in mc.groups]) == best[0]

    def test_r1_singletons(self):
        G = build_meta_graph([Membership([0, 1, 2, 0], 3)])
        mc = partition_meta_graph(G, 3, make_rng(0))
        assert sorted(len(g) for g in mc.groups) == [1, 1, 1]

    def test_balance(self):
        rng = make_rng(4)
        parts = [Membership(rng.integers(0, 3, 50), 3) for _ in range(5)]
        sizes = [len(g) for g in partition_meta_graph(build_meta_graph(parts), 3, rng).groups]
        assert max(sizes) - min(sizes) <= 1 and sum(sizes) == 15

    def test_degenerate_graph(self):
        G = MetaGraph(np.zeros((4, 5)), np.zeros((4, 4)), 2, 2)
        with pytest.warns(DegenerateGraphWarning):
            mc = partition_meta_graph(G, 2, make_rng(0))
        assert sorted(len(g) for g in mc.groups) == [2, 2]


class TestConsensus:
    def test_one_hot_means(self):
        mu = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
        out = consensus(MetaClusters((np.array([0]), np.array([1])), mu), make_rng(0))
        np.testing.assert_array_equal(out.assign, [0, 1, 1])

    def test_tie_broken_both_ways(self):
        mu = np.array([[0.5, 1.0], [0.5, 0.0]])
        mc = MetaClusters((np.array([0]), np.array([1])), mu)
        seen = {0: 0, 1: 0}
        for s in range(100):
            seen[int(consensus(mc, make_rng(s)).assign[0])] += 1
        assert seen[0] > 20 and seen[1] > 20


class TestMcla:
    @pytest.mark.parametrize("r,C", [(2, 2), (5, 2), (5, 4), (10, 4)])
    def test_identical_inputs(self, r, C):
        rng = make_rng(r * 10 + C)
        U = random_membership(50, C, rng)
        parts = [_relabelled(U, rng) for _ in range(r)]
        out = mcla(parts, C, rng)
        assert nmi(out, U) == 1.0
        assert anmi(out, parts) == 1.0

    def test_r1_returns_input(self):
        U = random_membership(30, 3, make_rng(5))
        assert nmi(mcla([U], 3, make_rng(6)), U) == 1.0

    def test_majority_of_noisy_copies(self):
        rng = make_rng(7)
        truth = Membership(np.repeat([0, 1, 2], 20), 3)
        parts = []
        for _ in range(9):
            a = truth.assign.copy()
            flip = rng.choice(60, 6, replace=False)
            a[flip] = rng.integers(0, 3, 6)
            parts.append(_relabelled(Membership(a, 3), rng))
        assert nmi(mcla(parts, 3, rng), truth) == 1.0

    def test_c_mismatch(self):
        with pytest.raises(ValueError):
            mcla([Membership([0, 1], 2)], 3, make_rng(0))
