"""Bases, projection and reconstruction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmdgmm.basis import (
    BasisSpec,
    CoefficientMatrix,
    WeightedGraph,
    graph_basis_vectors,
    gram,
    laplacian_eigenbasis,
    project,
    reconstruct,
    unvech,
    vech,
)

GRID64 = np.linspace(0.0, 1.0, 64)


def _random_graph(rng, n, p=0.4):
    edges = [(i, j, float(rng.uniform(0.5, 2.0))) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return WeightedGraph(n, edges)


class TestBasisSpec:
    def test_dimension_per_kind(self):
        assert BasisSpec("canonical", d=4).M == 4
        assert BasisSpec("cosine_l2", R=7).M == 7
        assert BasisSpec("cosine_l2", R=7, channels=2).M == 14
        assert BasisSpec("cosine_tensor2d", R=(3, 5)).M == 15
        assert BasisSpec("cosine_h1", R=6).M == 6
        assert BasisSpec("sym_vech", d=3).M == 6

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "wavelet", "R": 3},
            {"kind": "cosine_l2", "R": 0},
            {"kind": "graph_laplacian", "R": 2, "alpha": 0.0},
            {"kind": "canonical", "d": 0},
            {"kind": "cosine_l2", "R": 2, "grid": [0.0, 0.5, 0.4]},
            {"kind": "cosine_l2", "R": 2, "grid": [0.0, 1.5]},
        ],
    )
    def test_invalid_specs_rejected(self, kwargs):
        with pytest.raises(ValueError):
            BasisSpec(**kwargs)

    def test_coefficient_matrix_checks(self):
        with pytest.raises(ValueError):
            CoefficientMatrix(np.ones((3, 2)), BasisSpec("canonical", d=3))
        with pytest.raises(ValueError):
            CoefficientMatrix(np.array([[np.nan]]), BasisSpec("canonical", d=1))
        X = CoefficientMatrix.euclidean(np.arange(6.0).reshape(3, 2))
        assert (X.n, X.M) == (3, 2)
        assert not X.data.flags.writeable


class TestCosineProjection:
    def test_constant_function(self):
        c = project(np.ones((1, 64)), BasisSpec("cosine_l2", R=3)).data[0]
        np.testing.assert_allclose(c, [1.0, 0.0, 0.0], atol=1e-6)

    def test_first_cosine(self):
        f = np.sqrt(2.0) * np.cos(np.pi * GRID64)
        c = project(f[None, :], BasisSpec("cosine_l2", R=3)).data[0]
        np.testing.assert_allclose(c, [0.0, 1.0, 0.0], atol=1e-6)

    def test_h1_first_mode(self):
        # reference: the H1 inner product of f with the rescaled cosine by dense quadrature
        t = np.linspace(0.0, 1.0, 200001)
        f = np.sqrt(2.0) * np.cos(np.pi * t)
        df = -np.sqrt(2.0) * np.pi * np.sin(np.pi * t)
        s = np.sqrt(1.0 + np.pi**2)
        ref = np.trapezoid(f * f / s + df * df / s, t)
        assert ref == pytest.approx(3.2969083, abs=1e-6)
        g = np.sqrt(2.0) * np.cos(np.pi * GRID64)
        for quad, tol in (("parts", 1e-10), ("difference", 5e-3)):
            c = project(g[None, :], BasisSpec("cosine_h1", R=2, h1_quadrature=quad)).data[0]
            assert c[1] == pytest.approx(ref, abs=tol)
            assert abs(c[0]) < tol

    def test_multichannel_layout(self):
        f = np.stack([np.ones(64), np.sqrt(2.0) * np.cos(np.pi * GRID64)])[None]
        c = project(f, BasisSpec("cosine_l2", R=2, channels=2)).data[0]
        np.testing.assert_allclose(c, [1.0, 0.0, 0.0, 1.0], atol=1e-12)

    def test_tensor_product(self):
        g = np.linspace(0.0, 1.0, 32)
        f = np.sqrt(2.0) * np.cos(np.pi * g)[:, None] * np.ones(32)[None, :]
        c = project(f[None], BasisSpec("cosine_tensor2d", R=(2, 2))).data[0]
        np.testing.assert_allclose(c, [0.0, 0.0, 1.0, 0.0], atol=1e-12)

    def test_coarse_grid_rejected(self):
        with pytest.raises(ValueError, match="coarse"):
            project(np.ones((1, 5)), BasisSpec("cosine_l2", R=3))

    def test_shape_and_finiteness_errors(self):
        with pytest.raises(ValueError):
            project(np.ones((1, 10)), BasisSpec("cosine_l2", R=3, grid=np.linspace(0, 1, 12)))
        with pytest.raises(ValueError):
            project(np.full((1, 10), np.inf), BasisSpec("cosine_l2", R=3))
        with pytest.raises(ValueError):
            project(np.ones((2, 3)), BasisSpec("canonical", d=2))

    def test_nonuniform_grid(self):
        g = np.sort(np.concatenate([[0.0, 1.0], np.random.default_rng(0).uniform(0, 1, 400)]))
        f = np.sqrt(2.0) * np.cos(np.pi * g)
        c = project(f[None], BasisSpec("cosine_l2", R=3, grid=g)).data[0]
        np.testing.assert_allclose(c, [0.0, 1.0, 0.0], atol=1e-4)


class TestReconstruct:
    def test_constant(self):
        out = reconstruct(np.array([[1.0, 0.0, 0.0]]), GRID64, BasisSpec("cosine_l2", R=3))
        np.testing.assert_allclose(out[0], 1.0)

    def test_three_point_grid(self):
        out = reconstruct(np.array([[0.0, 1.0]]), [0.0, 0.5, 1.0], BasisSpec("cosine_l2", R=2))
        np.testing.assert_allclose(out[0], [np.sqrt(2.0), 0.0, -np.sqrt(2.0)], atol=1e-15)

    def test_round_trip_second_cosine(self):
        basis = BasisSpec("cosine_l2", R=5)
        f = np.sqrt(2.0) * np.cos(2 * np.pi * GRID64)
        c = project(f[None], basis)
        assert np.max(np.abs(reconstruct(c, GRID64) - f)) <= 1e-6

    @pytest.mark.parametrize("kind", ["cosine_l2", "cosine_h1"])
    def test_project_reconstruct_band_limited(self, kind):
        basis = BasisSpec(kind, R=6)
        C = np.random.default_rng(1).standard_normal((4, 6))
        back = project(reconstruct(C, GRID64, basis), basis).data
        np.testing.assert_allclose(back, C, atol=1e-8)

    def test_graph_requires_eigenvectors(self):
        with pytest.raises(ValueError):
            reconstruct(np.ones((1, 2)), None, BasisSpec("graph_laplacian", R=2, alpha=1.0))

    def test_function_basis_requires_grid(self):
        with pytest.raises(ValueError, match="grid"):
            reconstruct(np.ones((1, 2)), None, BasisSpec("cosine_l2", R=2))


class TestGraphBasis:
    def test_two_node_graph(self):
        b = laplacian_eigenbasis(WeightedGraph(2, [(0, 1, 1.0)]), 0.1, 1)
        e = graph_basis_vectors(b)[:, 0]
        assert b.eigenvalues[0] == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(e, np.ones(2) / np.sqrt(2.0) / np.sqrt(0.1), rtol=1e-12)
        L = np.array([[1.0, -1.0], [-1.0, 1.0]])
        assert e @ (L + 0.1 * np.eye(2)) @ e == pytest.approx(1.0, abs=1e-12)

    def test_complete_graph(self):
        g = WeightedGraph(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
        b = laplacian_eigenbasis(g, 1.0, 1)
        np.testing.assert_allclose(graph_basis_vectors(b)[:, 0], np.ones(3) / np.sqrt(3.0), atol=1e-12)

    def test_full_basis_orthonormal(self):
        g = _random_graph(np.random.default_rng(3), 12)
        b = laplacian_eigenbasis(g, 0.3, 12)
        np.testing.assert_allclose(gram(b, g.laplacian()), np.eye(12), atol=1e-10)
        assert np.all(np.diff(b.eigenvalues) >= 0)

    def test_sign_convention(self):
        g = _random_graph(np.random.default_rng(4), 9)
        U = laplacian_eigenbasis(g, 0.5, 9).eigenvectors
        for j in range(9):
            nz = np.flatnonzero(np.abs(U[:, j]) > 1e-12)
            assert U[nz[0], j] > 0

    def test_tie_break_by_peak_index(self):
        # two disconnected edges: eigenvalue 0 has multiplicity 2
        g = WeightedGraph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        b = laplacian_eigenbasis(g, 1.0, 4)
        first, second = b.eigenvectors[:, 0], b.eigenvectors[:, 1]
        assert np.argmax(np.abs(first)) <= np.argmax(np.abs(second))
        again = laplacian_eigenbasis(g, 1.0, 4)
        np.testing.assert_array_equal(b.eigenvectors, again.eigenvectors)

    def test_projection_matches_inner_product(self):
        g = _random_graph(np.random.default_rng(5), 10)
        b = laplacian_eigenbasis(g, 0.2, 6)
        f = np.random.default_rng(6).standard_normal((3, 10))
        A = g.laplacian() + 0.2 * np.eye(10)
        naive = f @ A @ graph_basis_vectors(b)
        np.testing.assert_allclose(project(f, b).data, naive, atol=1e-12)

    def test_errors(self):
        g = WeightedGraph(3, [(0, 1, 1.0)])
        with pytest.raises(ValueError):
            laplacian_eigenbasis(g, 0.1, 4)
        with pytest.raises(ValueError):
            laplacian_eigenbasis(g, 0.0, 2)
        with pytest.raises(ValueError):
            WeightedGraph(3, [(1, 1, 1.0)])
        with pytest.raises(ValueError):
            WeightedGraph(3, [(0, 3, 1.0)])


class TestVech:
    def test_example(self):
        v = vech(np.array([[1.0, 2.0], [2.0, 3.0]]))
        np.testing.assert_allclose(v, [1.0, 3.0, 2.0 * np.sqrt(2.0)])
        assert v @ v == pytest.approx(18.0, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 10_000))
    def test_frobenius_isometry(self, d, seed):
        rng = np.random.default_rng(seed)
        A, B = rng.standard_normal((2, d, d))
        A, B = A + A.T, B + B.T
        assert vech(A) @ vech(B) == pytest.approx(np.trace(A.T @ B), rel=1e-13, abs=1e-12)
        np.testing.assert_allclose(unvech(vech(A), d), A, rtol=0, atol=1e-14)

    def test_project_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            project(np.array([[[1.0, 2.0], [0.0, 1.0]]]), BasisSpec("sym_vech", d=2))


class TestProperties:
    @pytest.mark.parametrize(
        "basis",
        [
            BasisSpec("canonical", d=3),
            BasisSpec("sym_vech", d=3),
            BasisSpec("cosine_l2", R=8, grid=GRID64),
            BasisSpec("cosine_l2", R=4, channels=2, grid=GRID64),
            BasisSpec("cosine_h1", R=8, grid=GRID64),
            BasisSpec("cosine_tensor2d", R=(3, 4), grid=np.linspace(0, 1, 16)),
        ],
        ids=lambda b: b.kind,
    )
    def test_gram_is_identity(self, basis):
        np.testing.assert_allclose(gram(basis), np.eye(basis.M), atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        f, g = rng.standard_normal((2, 2, 64))
        basis = BasisSpec("cosine_h1", R=5)
        lhs = project(a * f + b * g, basis).data
        rhs = a * project(f, basis).data + b * project(g, basis).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_bessel(self):
        rng = np.random.default_rng(7)
        big = BasisSpec("cosine_l2", R=20, grid=np.linspace(0, 1, 256))
        for _ in range(5):
            f = reconstruct(rng.standard_normal((1, 20)) / np.arange(1, 21), basis=big)[0]
            norm2 = project(f[None], big).data[0] @ project(f[None], big).data[0]
            prev = 0.0
            for R in (2, 5, 10, 15, 20):
                c = project(f[None], BasisSpec("cosine_l2", R=R, grid=big.grid)).data[0]
                assert c @ c >= prev - 1e-12
                assert c @ c <= norm2 + 1e-10
                prev = c @ c
