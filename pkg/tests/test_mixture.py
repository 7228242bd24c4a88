"""Mixture state, responsibilities and sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from mmdgmm.kernels import GaussianComponent
from mmdgmm.mixture import MixtureState, hard_labels, mixture_loglik, responsibilities, sample


def _comp(mean, cov):
    return GaussianComponent.from_covariance(mean, cov, "full")


def _random_mixture(rng, K=3, M=2):
    comps = []
    for _ in range(K):
        A = rng.standard_normal((M, M)) * 0.5
        comps.append(_comp(rng.standard_normal(M) * 2, A @ A.T + 0.3 * np.eye(M)))
    return MixtureState(rng.dirichlet(np.ones(K)), comps)


class TestState:
    def test_validation(self):
        c = _comp([0.0], [[1.0]])
        with pytest.raises(ValueError):
            MixtureState([0.5, 0.6], [c, c])
        with pytest.raises(ValueError):
            MixtureState([1.0], [c, c])
        with pytest.raises(ValueError):
            MixtureState([0.5, 0.5], [c, _comp([0.0, 0.0], np.eye(2))])
        with pytest.raises(ValueError):
            MixtureState([], [])

    def test_truncated_marginal(self):
        rng = np.random.default_rng(0)
        mix = _random_mixture(rng, 2, 4)
        t = mix.truncated(2)
        for full, part in zip(mix.components, t.components):
            np.testing.assert_allclose(part.covariance(), full.covariance()[:2, :2], atol=1e-14)


class TestResponsibilities:
    def test_single_component(self):
        mix = MixtureState([1.0], [_comp([0.0], [[1.0]])])
        np.testing.assert_array_equal(responsibilities(np.linspace(-5, 5, 11), mix), 1.0)

    def test_identical_components(self):
        c = _comp([0.0, 0.0], np.eye(2))
        gamma = responsibilities(np.random.default_rng(1).standard_normal((20, 2)), MixtureState([0.3, 0.7], [c, c]))
        np.testing.assert_allclose(gamma, np.tile([0.3, 0.7], (20, 1)), atol=1e-15)

    def test_equidistant_point(self):
        mix = MixtureState([0.5, 0.5], [_comp([-1.0, 0.0], np.eye(2)), _comp([1.0, 0.0], np.eye(2))])
        np.testing.assert_allclose(responsibilities(np.array([[0.0, 3.0]]), mix), [[0.5, 0.5]], atol=1e-15)

    def test_matches_direct_ratio(self):
        rng = np.random.default_rng(2)
        mix = _random_mixture(rng)
        X = rng.standard_normal((50, 2))
        dens = np.stack([w * multivariate_normal(c.mean, c.covariance()).pdf(X) for w, c in zip(mix.weights, mix.components)], axis=1)
        np.testing.assert_allclose(responsibilities(X, mix, ridge=0.0), dens / dens.sum(axis=1, keepdims=True), atol=1e-10)

    def test_zero_weight_column_exactly_zero(self):
        c = _comp([0.0], [[1.0]])
        gamma = responsibilities(np.array([[0.0], [1.0]]), MixtureState([1.0, 0.0], [c, c]))
        assert np.all(gamma[:, 1] == 0.0)

    def test_singular_without_ridge(self):
        c = GaussianComponent([0.0], [0.0], "diag", 0.0)
        with pytest.raises(ValueError):
            responsibilities(np.zeros((2, 1)), MixtureState([1.0], [c]), ridge=0.0)

    def test_nonfinite_data(self):
        with pytest.raises(ValueError):
            responsibilities(np.array([[np.nan]]), MixtureState([1.0], [_comp([0.0], [[1.0]])]))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 100_000))
    def test_rows_on_simplex(self, seed):
        rng = np.random.default_rng(seed)
        mix = _random_mixture(rng, K=int(rng.integers(1, 5)))
        gamma = responsibilities(rng.standard_normal((30, 2)) * 10, mix)
        np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-12)
        assert np.all((gamma >= 0) & (gamma <= 1))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        mix = _random_mixture(rng)
        X = rng.standard_normal((15, 2))
        perm = [2, 0, 1]
        np.testing.assert_allclose(responsibilities(X, mix.permuted(perm)), responsibilities(X, mix)[:, perm], atol=1e-15)

    def test_hard_label_ties_to_lowest(self):
        np.testing.assert_array_equal(hard_labels(np.array([[0.5, 0.5], [0.2, 0.8]])), [0, 1])

    def test_nested_projection_uninformative_tail(self):
        # discarded coordinates have equal means across components and are independent of the rest
        rng = np.random.default_rng(4)
        comps = []
        for m in ([-2.0, 0.0], [2.0, 1.0]):
            cov = np.zeros((4, 4))
            cov[:2, :2] = [[1.0, 0.2], [0.2, 0.8]]
            cov[2:, 2:] = [[0.5, 0.1], [0.1, 0.7]]
            comps.append(_comp(m + [0.3, -0.4], cov))
        mix = MixtureState([0.4, 0.6], comps)
        X, _ = sample(mix, 200, 5)
        g_full = responsibilities(X, mix)
        g_part = responsibilities(X.data[:, :2], mix.truncated(2))
        np.testing.assert_allclose(g_full, g_part, atol=1e-8)


class TestSample:
    def test_zero_covariance(self):
        mix = MixtureState([1.0], [GaussianComponent([1.5, -2.0], [0.0, 0.0], "diag", 0.0)])
        X, labels = sample(mix, 10, 0)
        np.testing.assert_array_equal(X.data, np.tile([1.5, -2.0], (10, 1)))

    def test_degenerate_weights(self):
        c = _comp([0.0], [[1.0]])
        _, labels = sample(MixtureState([1.0, 0.0], [c, c]), 100, 0)
        assert np.all(labels == 0)

    def test_moments(self):
        S = np.array([[2.0, 0.6], [0.6, 1.0]])
        mix = MixtureState([1.0], [_comp([1.0, -1.0], S)])
        X, _ = sample(mix, 100_000, 9)
        assert np.all(np.abs(X.data.mean(axis=0) - [1.0, -1.0]) <= 4 * np.sqrt(np.diag(S) / 100_000))
        assert np.linalg.norm(np.cov(X.data, rowvar=False) - S) / np.linalg.norm(S) < 0.05

    def test_deterministic(self):
        mix = _random_mixture(np.random.default_rng(1))
        a, la = sample(mix, 50, 3)
        b, lb = sample(mix, 50, 3)
        c, _ = sample(mix, 50, 4)
        np.testing.assert_array_equal(a.data, b.data)
        np.testing.assert_array_equal(la, lb)
        assert not np.array_equal(a.data, c.data)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            sample(MixtureState([1.0], [_comp([0.0], [[1.0]])]), 0, 0)

    def test_loglik_single_gaussian(self):
        mix = MixtureState([1.0], [_comp([0.0], [[1.0]])])
        assert mixture_loglik(np.zeros((1, 1)), mix) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-14)
