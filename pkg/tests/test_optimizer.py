"""Alternating fit: initialisation, QP step, gradient steps."""

import numpy as np
import pytest

from mmdgmm.kernels import GaussianComponent, KernelSpec
from mmdgmm.mixture import MixtureState, sample
from mmdgmm.optimizer import FitConfig, FitError, fit, kmeans, kmeanspp_init, min_cov_eigenvalue
from mmdgmm.qp import qp_objective


def _two_blobs(seed=0, n=200):
    truth = MixtureState([0.5, 0.5], [GaussianComponent([-5.0], [0.5], "diag", 0.0), GaussianComponent([5.0], [0.5], "diag", 0.0)])
    return sample(truth, n, seed)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"K": 0}, {"epochs": -1}, {"learning_rate": 0.0}, {"ridge": -1.0}, {"covariance_type": "tied"}, {"lr_schedule": "step"}, {"init": "provided"}, {"optimizer": "sgd"}, {"workers": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            FitConfig(**kwargs)

    def test_cosine_schedule(self):
        cfg = FitConfig(epochs=11, learning_rate=0.1, lr_schedule="cosine", final_lr=1e-4)
        assert cfg.lr_at(0) == pytest.approx(0.1)
        assert cfg.lr_at(10) == pytest.approx(1e-4)
        assert cfg.lr_at(5) == pytest.approx(0.5 * (0.1 + 1e-4))
        assert FitConfig(learning_rate=0.3).lr_at(7) == 0.3


class TestInit:
    def test_singleton_clusters(self):
        X = np.array([[0.0, 0.0], [3.0, 1.0], [-2.0, 4.0]])
        comps = kmeanspp_init(X, 3, 1e-4, 0, "full")
        got = sorted(map(tuple, np.stack([c.mean for c in comps])))
        assert got == sorted(map(tuple, X))
        for c in comps:
            np.testing.assert_allclose(c.covariance(), 1e-4 * np.eye(2), atol=1e-18)

    def test_two_blobs(self):
        X, labels = _two_blobs()
        comps = kmeanspp_init(X, 2, 1e-6, 3)
        means = sorted(c.mean[0] for c in comps)
        for m, k in zip(means, (0, 1)):
            blob = X.data[labels == k, 0]
            assert abs(m - blob.mean()) <= 3 * 0.5 / np.sqrt(blob.size)

    def test_within_cluster_covariance(self):
        X, labels = _two_blobs(1)
        comps = kmeanspp_init(X, 2, 1e-3, 0, "diag")
        for c in comps:
            blob = X.data[labels == (0 if c.mean[0] < 0 else 1), 0]
            assert c.covariance()[0, 0] == pytest.approx(blob.var(ddof=1) + 1e-3, rel=1e-10)

    def test_row_order_invariant(self):
        X = np.random.default_rng(2).normal(size=(60, 2))
        perm = np.random.default_rng(3).permutation(60)
        a = kmeanspp_init(X, 4, 1e-6, 7, "full")
        b = kmeanspp_init(X[perm], 4, 1e-6, 7, "full")
        for ca, cb in zip(a, b):
            np.testing.assert_array_equal(ca.mean, cb.mean)
            np.testing.assert_allclose(ca.covariance(), cb.covariance(), atol=1e-14)

    def test_lowest_index_on_ties(self):
        centers, labels = kmeans(np.array([[0.0], [0.0], [0.0]]), 2, 0)
        assert np.all(labels == 0)

    def test_errors(self):
        with pytest.raises(ValueError):
            kmeanspp_init(np.zeros((2, 1)), 3, 1e-6, 0)
        with pytest.raises(ValueError):
            kmeanspp_init(np.zeros((2, 1)), 0, 1e-6, 0)


class TestFit:
    def test_collapses_onto_constant_data(self):
        X = np.full((30, 2), [0.7, -0.2])
        r = fit(X, KernelSpec.gaussian(1.0), FitConfig(K=1, epochs=200, learning_rate=0.05))
        assert np.max(np.abs(r.final_state.means[0] - [0.7, -0.2])) <= 1e-3
        # loss without the constant tends to -1 (the constant is +1)
        assert r.loss_trace[-1] + 1.0 <= 1e-3

    def test_trace_shapes_and_decrease(self):
        for seed in range(3):
            X, _ = _two_blobs(seed)
            r = fit(X, KernelSpec.gaussian(2.0), FitConfig(K=2, epochs=60, seed=seed))
            assert r.loss_trace.shape == (60,) and r.qp_kkt_residuals.shape == (60,)
            assert r.loss_trace[-1] <= r.loss_trace[0]
            assert np.all(r.qp_kkt_residuals <= 1e-10)

    def test_epoch_invariants(self):
        X, _ = _two_blobs(4)
        for cov in ("diag", "full"):
            r = fit(X, KernelSpec.gaussian(1.0), FitConfig(K=3, epochs=40, ridge=1e-4, covariance_type=cov), track=True)
            for pi in r.weight_trace:
                assert np.all(pi >= 0) and abs(pi.sum() - 1) <= 1e-12
            assert min(r.min_cov_eig_trace) >= 1e-4 * (1 - 1e-8)
            assert min_cov_eigenvalue(r.final_state.components) >= 1e-4 * (1 - 1e-8)

    def test_qp_step_never_increases(self):
        # re-run the per-epoch QP by hand at the previous weights
        from mmdgmm.kernels import cross_matrix, gram_matrix

        X, _ = _two_blobs(5)
        kernel = KernelSpec.gaussian(1.5)
        r = fit(X, kernel, FitConfig(K=2, epochs=1))
        comps = r.final_state.components
        I, J = gram_matrix(comps, kernel), cross_matrix(X, comps, kernel).mean(axis=0)
        from mmdgmm.qp import solve_simplex_qp

        for prev in (np.array([0.5, 0.5]), np.array([1.0, 0.0]), r.final_state.weights):
            assert qp_objective(I, J, solve_simplex_qp(I, J)) <= qp_objective(I, J, prev) + 1e-15

    def test_full_and_diag_agree_in_one_dimension(self):
        X, _ = _two_blobs(6)
        kernel = KernelSpec.gaussian(1.5)
        init_d = [GaussianComponent([-1.0], [0.5], "diag", 1e-6), GaussianComponent([1.0], [0.5], "diag", 1e-6)]
        init_f = [GaussianComponent([-1.0], [[0.5]], "full", 1e-6), GaussianComponent([1.0], [[0.5]], "full", 1e-6)]
        a = fit(X, kernel, FitConfig(K=2, epochs=80, init="provided", initial_components=init_d))
        b = fit(X, kernel, FitConfig(K=2, epochs=80, covariance_type="full", init="provided", initial_components=init_f))
        assert abs(a.loss_trace[-1] - b.loss_trace[-1]) <= 1e-6

    def test_full_no_worse_than_diag(self):
        # with finite samples the empirical cross-covariance is nonzero; the full path may use it
        truth = MixtureState([0.6, 0.4], [GaussianComponent([-1.5, 0.5], [0.6, 0.3], "diag", 0), GaussianComponent([1.5, -0.5], [0.4, 0.7], "diag", 0)])
        X, _ = sample(truth, 300, 0)
        kernel = KernelSpec.gaussian(1.5)
        init_d = [GaussianComponent([-1.0, 0.0], [0.5, 0.5], "diag", 1e-6), GaussianComponent([1.0, 0.0], [0.5, 0.5], "diag", 1e-6)]
        init_f = [GaussianComponent(c.mean, np.diag(c.factor), "full", 1e-6) for c in init_d]
        a = fit(X, kernel, FitConfig(K=2, epochs=100, init="provided", initial_components=init_d))
        b = fit(X, kernel, FitConfig(K=2, epochs=100, covariance_type="full", init="provided", initial_components=init_f))
        assert b.loss_trace[-1] <= a.loss_trace[-1] + 1e-6

    def test_translation_equivariance(self):
        X, _ = _two_blobs(7, n=120)
        v = np.array([3.3])
        kernel = KernelSpec.gaussian(1.2)
        init = [GaussianComponent([-1.0], [0.5], "diag", 1e-6), GaussianComponent([2.0], [0.5], "diag", 1e-6)]
        moved = [c.with_params(mean=c.mean + v) for c in init]
        a = fit(X, kernel, FitConfig(K=2, epochs=50, init="provided", initial_components=init))
        b = fit(X.data + v, kernel, FitConfig(K=2, epochs=50, init="provided", initial_components=moved))
        np.testing.assert_allclose(a.loss_trace, b.loss_trace, atol=1e-8)
        np.testing.assert_allclose(a.final_state.means + v, b.final_state.means, atol=1e-6)

    def test_workers_bit_identical(self):
        X, _ = _two_blobs(8)
        cfg = dict(K=3, epochs=15, covariance_type="full")
        a = fit(X, KernelSpec.gaussian(1.0), FitConfig(**cfg, workers=1))
        b = fit(X, KernelSpec.gaussian(1.0), FitConfig(**cfg, workers=3))
        np.testing.assert_array_equal(a.loss_trace, b.loss_trace)
        np.testing.assert_array_equal(a.final_state.means, b.final_state.means)

    def test_deterministic(self):
        X, _ = _two_blobs(9)
        a = fit(X, KernelSpec.polynomial(2, 1.0), FitConfig(K=2, epochs=10, learning_rate=1e-3))
        b = fit(X, KernelSpec.polynomial(2, 1.0), FitConfig(K=2, epochs=10, learning_rate=1e-3))
        np.testing.assert_array_equal(a.loss_trace, b.loss_trace)

    def test_adam_runs(self):
        X, _ = _two_blobs(10)
        init = [GaussianComponent([-1.0], [1.0], "diag", 1e-6), GaussianComponent([1.0], [1.0], "diag", 1e-6)]
        cfg = FitConfig(K=2, epochs=300, optimizer="adam", init="provided", initial_components=init)
        r = fit(X, KernelSpec.gaussian(2.0), cfg)
        assert r.loss_trace[-1] < r.loss_trace[0]
        assert sorted(np.round(r.final_state.means[:, 0])) == [-5.0, 5.0]

    def test_divergence_reports_epoch(self):
        X = np.random.default_rng(0).normal(size=(100, 2))
        with pytest.raises(FitError) as info:
            fit(X, KernelSpec.polynomial(3, 1.0), FitConfig(K=2, epochs=50, learning_rate=1e3))
        assert 0 <= info.value.epoch < 50
        assert "epoch" in str(info.value)

    def test_provided_init_checked(self):
        with pytest.raises(ValueError):
            fit(np.zeros((5, 2)), KernelSpec.gaussian(1.0), FitConfig(K=2, init="provided", initial_components=[GaussianComponent([0.0], [1.0], "diag")]))

    def test_needs_enough_rows(self):
        with pytest.raises(ValueError):
            fit(np.zeros((2, 1)), KernelSpec.gaussian(1.0), FitConfig(K=3))
