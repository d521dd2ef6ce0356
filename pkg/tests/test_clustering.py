import itertools

import numpy as np
import pytest

from approxkkm import clustering as cl
from approxkkm.core import DataMatrix, Membership, make_rng
from approxkkm.data import two_rings
from approxkkm.kernels import KernelSpec, full_kernel, rect_from_full, rect_kernel
from approxkkm.linalg import SingularKernelError
from approxkkm.metrics import nmi

BLOCK = np.array([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]], dtype=float)


def objective_oracle(K, assign, C):
    """Sum of squared feature-space distances to the cluster means, via the center expansion."""
    n = K.shape[0]
    total = 0.0
    for k in range(C):
        mem = [i for i in range(n) if assign[i] == k]
        for i in mem:
            # ||phi_i - (1/n_k) sum_j phi_j||^2
            total += K[i, i] - 2 * sum(K[i, j] for j in mem) / len(mem) \
                + sum(K[a, b] for a in mem for b in mem) / len(mem) ** 2
    return total


class TestObjective:
    def test_identity_one_cluster(self):
        assert cl.clustering_objective(np.eye(4), Membership([0, 0, 0, 0], 1)) == pytest.approx(3.0)

    def test_perfect_blocks(self):
        assert cl.clustering_objective(BLOCK, Membership([0, 0, 1, 1], 2)) == 0.0

    def test_matches_center_expansion(self):
        rng = make_rng(0)
        A = rng.standard_normal((6, 6))
        K = A @ A.T
        U = Membership(rng.integers(0, 3, 6), 3)
        assert cl.clustering_objective(K, U) == pytest.approx(objective_oracle(K, U.assign, 3), rel=1e-12)


class TestKmeans:
    def test_two_blobs(self):
        X = DataMatrix(np.r_[np.linspace(0, 1, 5), np.linspace(50, 51, 5)])
        res = cl.kmeans(X, 2, cl.SolverConfig(seed=1))
        assert nmi(res.membership.assign, [0] * 5 + [1] * 5) == 1.0

    def test_c_equals_n(self):
        X = DataMatrix(make_rng(1).standard_normal((6, 2)))
        res = cl.kmeans(X, 6, cl.SolverConfig(seed=0))
        assert sorted(res.membership.assign) == list(range(6))
        assert res.objective_trace[-1] == 0.0

    def test_single_cluster_total_variance(self):
        V = make_rng(2).standard_normal((20, 3))
        res = cl.kmeans(DataMatrix(V), 1)
        assert res.objective_trace[-1] == pytest.approx(((V - V.mean(0)) ** 2).sum(), rel=1e-12)

    def test_trace_non_increasing(self):
        X = DataMatrix(make_rng(3).standard_normal((200, 2)))
        trace = cl.kmeans(X, 5, cl.SolverConfig(seed=4)).objective_trace
        assert np.all(np.diff(trace) <= 1e-9 * trace[0])


class TestKernelKmeans:
    def test_block_any_init(self):
        for init in ([0, 1, 0, 1], [0, 0, 0, 1], [1, 0, 0, 0]):
            res = cl.kernel_kmeans(BLOCK, 2, cl.SolverConfig(init=Membership(init, 2)))
            assert cl.clustering_objective(BLOCK, res.membership) == 0.0
            assert res.converged

    def test_matches_brute_force_on_far_blobs(self):
        X = DataMatrix(np.array([0.0, 0.1, 0.2, 10.0, 10.1, 10.3]))
        with pytest.warns(UserWarning, match="kappa"):
            K = full_kernel(X, KernelSpec("linear")).matrix
        best = min((objective_oracle(K, lab, 2), lab) for lab in itertools.product((0, 1), repeat=6)
                   if 0 < sum(lab) < 6)
        res = cl.kernel_kmeans(K, 2, cl.SolverConfig(seed=0))
        assert cl.clustering_objective(K, res.membership) == pytest.approx(best[0], abs=1e-10)

    def test_trace_matches_objective(self):
        X = DataMatrix(make_rng(5).standard_normal((50, 2)))
        K = full_kernel(X, KernelSpec("rbf"))
        res = cl.kernel_kmeans(K, 3, cl.SolverConfig(seed=1, record_memberships=True))
        for t, U in zip(res.objective_trace, res.history):
            assert t == pytest.approx(cl.clustering_objective(K, U), rel=1e-12)

    def test_rings(self):
        X = two_rings(500, 0.05, make_rng(0, 4))
        K = full_kernel(X, KernelSpec("rbf", sigma=1.5))
        res = cl.kernel_kmeans(K, 2, cl.SolverConfig(seed=0))
        assert nmi(res.membership, X.labels) >= 0.95

    def test_empty_cluster_repaired(self):
        K = np.eye(5)
        res = cl.kernel_kmeans(K, 3, cl.SolverConfig(init=Membership([0, 0, 0, 0, 1], 3), maxiter=1))
        assert res.empty_cluster_repairs == 1
        assert res.membership.empty_clusters == ()

    def test_c_too_large(self):
        with pytest.raises(ValueError):
            cl.kernel_kmeans(np.eye(2), 3)


class TestAlphaSolvers:
    def _instance(self, seed, n=60, m=8, C=3):
        rng = make_rng(seed)
        X = DataMatrix(rng.uniform(-3, 3, (n, 2)))
        rk = rect_kernel(X, rng.choice(n, m, replace=False), KernelSpec("rbf", sigma=0.7))
        return rk, cl._l1_rows(cl.random_membership(n, C, rng).assign, C)

    def test_identity_khat(self):
        KB = make_rng(1).standard_normal((10, 4))
        Uhat = cl._l1_rows(np.arange(10) % 2, 2)
        np.testing.assert_allclose(cl.solve_alpha_direct(Uhat, KB, np.eye(4)).alpha, Uhat @ KB, rtol=1e-14)
        gd = cl.solve_alpha_gd(Uhat, KB, np.eye(4))
        np.testing.assert_allclose(gd.alpha, Uhat @ KB, rtol=1e-12)
        assert gd.iterations == 1

    def test_m_equals_n_gives_uhat(self):
        X = DataMatrix(make_rng(2).standard_normal((12, 2)))
        K = full_kernel(X, KernelSpec("rbf")).matrix
        Uhat = cl._l1_rows(np.arange(12) % 3, 3)
        np.testing.assert_allclose(cl.solve_alpha_direct(Uhat, K, K).alpha, Uhat, atol=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_gd_agrees_with_direct(self, seed):
        rk, Uhat = self._instance(seed)
        direct = cl.solve_alpha_direct(Uhat, rk.KB, rk.Khat).alpha
        gd = cl.solve_alpha_gd(Uhat, rk.KB, rk.Khat, eps=1e-12)
        assert np.max(np.abs(gd.alpha - direct)) <= 1e-6
        assert all(d < 0 for d in gd.step_changes)

    def test_gd_warm_start_needs_fewer_steps(self):
        rk, Uhat = self._instance(7)
        cold = cl.solve_alpha_gd(Uhat, rk.KB, rk.Khat)
        warm = cl.solve_alpha_gd(Uhat, rk.KB, rk.Khat, alpha0=cold.alpha * 0.999)
        assert warm.iterations < cold.iterations

    def test_gd_cap_raises(self):
        rk, Uhat = self._instance(8)
        with pytest.raises(cl.ConvergenceError):
            cl.solve_alpha_gd(Uhat, rk.KB, rk.Khat, eps=1e-12, maxiter=3)

    def test_singular_without_pinv(self):
        Khat = np.ones((3, 3))
        with pytest.raises(SingularKernelError):
            cl.solve_alpha_direct(np.ones((1, 3)) / 3, Khat, Khat, pinv=False)


class TestApproxKKM:
    def test_m_equals_n_sequence(self):
        rng = make_rng(3)
        X = DataMatrix(rng.standard_normal((60, 2)) + np.repeat([[0, 0], [4, 0]], 30, axis=0))
        spec = KernelSpec("rbf")
        cfg = cl.SolverConfig(ridge=0.0, init=cl.random_membership(60, 2, rng), record_memberships=True)
        ref = cl.kernel_kmeans(full_kernel(X, spec), 2, cfg)
        got = cl.approx_kkm(X, spec, np.arange(60), 2, cfg)
        assert [h.assign.tolist() for h in got.history] == [h.assign.tolist() for h in ref.history]

    def test_restricted_objective_offset(self):
        X = DataMatrix(make_rng(4).standard_normal((40, 2)))
        spec = KernelSpec("rbf")
        K = full_kernel(X, spec).matrix
        U = cl.random_membership(40, 3, make_rng(1))
        rk = rect_from_full(full_kernel(X, spec), np.arange(40))
        # with every point sampled the restricted error is the ordinary clustering error
        full = np.trace(K) + cl.restricted_objective(rk, U)
        assert full == pytest.approx(cl.clustering_objective(K, U), rel=1e-8)

    def test_gd_and_direct_runs_agree(self):
        X = two_rings(200, 0.05, make_rng(0, 4))
        spec = KernelSpec("rbf", sigma=1.5)
        idx = make_rng(1).choice(200, 20, replace=False)
        # a visible ridge keeps K-hat well conditioned enough for plain gradient descent
        a = cl.approx_kkm(X, spec, idx, 2, cl.SolverConfig(seed=2, ridge=1e-2))
        b = cl.approx_kkm(X, spec, idx, 2, cl.SolverConfig(seed=2, ridge=1e-2, alpha_solver="gd",
                                                            gd_eps=1e-10))
        np.testing.assert_array_equal(a.membership.assign, b.membership.assign)

    def test_one_sample_per_blob(self):
        X = DataMatrix(np.r_[np.linspace(0, 0.5, 6), np.linspace(20, 20.5, 6)])
        res = cl.approx_kkm(X, KernelSpec("rbf", sigma=2.0), [2, 9], 2, cl.SolverConfig(seed=0))
        assert nmi(res.membership.assign, [0] * 6 + [1] * 6) == 1.0

    def test_rings_m50(self):
        X = two_rings(500, 0.05, make_rng(0, 4))
        res = cl.approx_kkm(X, KernelSpec("rbf", sigma=1.5), make_rng(0, 1).choice(500, 50, replace=False),
                            2, cl.SolverConfig(seed=0))
        assert nmi(res.membership, X.labels) >= 0.95

    def test_m_smaller_than_c(self):
        X = DataMatrix(np.zeros((5, 1)))
        with pytest.raises(ValueError):
            cl.approx_kkm(X, KernelSpec("rbf"), [0], 2)


class TestTwoStep:
    def test_m_equals_n_matches_kernel_kmeans(self):
        X = DataMatrix(make_rng(5).standard_normal((30, 2)))
        spec = KernelSpec("rbf")
        init = cl.random_membership(30, 3, make_rng(0))
        ref = cl.kernel_kmeans(full_kernel(X, spec), 3, cl.SolverConfig(init=init))
        got = cl.two_step_kkm(X, spec, 30, 3, cl.SolverConfig(init=init), sample_indices=np.arange(30))
        np.testing.assert_array_equal(got.membership.assign, ref.membership.assign)

    def test_one_sample_per_blob(self):
        X = DataMatrix(np.r_[np.linspace(0, 0.5, 6), np.linspace(20, 20.5, 6)])
        res = cl.two_step_kkm(X, KernelSpec("rbf", sigma=2.0), 2, 2, sample_indices=[1, 8])
        assert nmi(res.membership.assign, [0] * 6 + [1] * 6) == 1.0


class TestNystromSpectral:
    def test_block_kernel(self):
        res = cl.nystrom_spectral(BLOCK, BLOCK, 2)
        assert nmi(res.membership.assign, [0, 0, 1, 1]) == 1.0

    def test_embedding_matches_dense(self):
        X = DataMatrix(make_rng(6).standard_normal((30, 2)))
        rk = rect_kernel(X, np.arange(0, 30, 3), KernelSpec("rbf"))
        E, mu = cl.nystrom_embedding(rk.KB, rk.Khat, 3)
        approx = rk.KB @ np.linalg.pinv(rk.Khat) @ rk.KB.T
        w = np.sort(np.linalg.eigvalsh(approx))[::-1][:3]
        np.testing.assert_allclose(mu, w, rtol=1e-8)
        np.testing.assert_allclose(E.T @ E, np.eye(3), atol=1e-8)

    def test_rank_too_low(self):
        K = np.ones((4, 4))
        with pytest.raises(cl.SpectrumError):
            cl.nystrom_spectral(K, K, 2)

    def test_not_better_than_akkm_on_rings(self):
        X = two_rings(500, 0.05, make_rng(0, 4))
        spec = KernelSpec("rbf", sigma=1.5)
        ny, ak = [], []
        for seed in range(5):
            idx = make_rng(seed, 1).choice(500, 100, replace=False)
            rk = rect_kernel(X, idx, spec)
            ny.append(nmi(cl.nystrom_spectral(rk.KB, rk.Khat, 2, cl.SolverConfig(seed=seed)).membership,
                          X.labels))
            ak.append(nmi(cl.approx_kkm_from_rect(rk, 2, cl.SolverConfig(seed=seed)).membership, X.labels))
        assert np.mean(ny) <= np.mean(ak)


class TestSolverConfig:
    @pytest.mark.parametrize("bad", [dict(maxiter=0), dict(alpha_solver="cg"), dict(gd_eps=0.0),
                                     dict(ridge=-1.0), dict(empty_cluster_policy="drop")])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            cl.SolverConfig(**bad)
