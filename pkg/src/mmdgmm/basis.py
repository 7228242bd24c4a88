"""Orthonormal bases and coefficient projection.

Supported kinds:

``canonical``        R^d with the standard basis (M = d).
``cosine_l2``        L^2(0, 1) cosines e_0 = 1, e_r = sqrt(2) cos(pi r t), M = R
                     (times ``channels`` for vector-valued curves).
``cosine_tensor2d``  products e_a(s) e_b(t) on [0, 1]^2, M = R_s * R_t.
``cosine_h1``        H^1(0, 1) cosines e_r / sqrt(1 + pi^2 r^2), M = R.
``graph_laplacian``  eigenvectors of L + alpha I rescaled to unit energy, M = R.
``sym_vech``         Sym(d) with the Frobenius-isometric vech embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FUNCTION_KINDS = ("cosine_l2", "cosine_tensor2d", "cosine_h1")
KINDS = ("canonical",) + FUNCTION_KINDS + ("graph_laplacian", "sym_vech")


@dataclass(frozen=True, eq=False)
class BasisSpec:
    kind: str
    R: int | tuple[int, int] = 0
    alpha: float = 0.0
    grid: np.ndarray | None = None
    d: int = 0
    channels: int = 1
    h1_quadrature: str = "parts"
    eigenvalues: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "cosine_tensor2d":
            R = tuple(int(r) for r in np.broadcast_to(self.R, (2,)))
            if min(R) < 1:
                raise ValueError("tensor basis needs R_s, R_t >= 1")
            object.__setattr__(self, "R", R)
        elif self.kind in ("cosine_l2", "cosine_h1", "graph_laplacian"):
            if int(self.R) < 1:
                raise ValueError(f"{self.kind} needs R >= 1")
            object.__setattr__(self, "R", int(self.R))
        if self.kind in ("canonical", "sym_vech") and self.d < 1:
            raise ValueError(f"{self.kind} needs d >= 1")
        if self.kind == "graph_laplacian" and not self.alpha > 0:
            raise ValueError("graph_laplacian needs alpha > 0")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.h1_quadrature not in ("parts", "difference"):
            raise ValueError("h1_quadrature must be 'parts' or 'difference'")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float).reshape(-1)
            if g.size < 2 or np.any(np.diff(g) <= 0) or not np.all(np.isfinite(g)):
                raise ValueError("grid must be strictly increasing and finite")
            if self.kind in FUNCTION_KINDS and (g[0] < 0 or g[-1] > 1):
                raise ValueError("grid must lie inside [0, 1]")
            object.__setattr__(self, "grid", g)

    @property
    def M(self) -> int:
        if self.kind == "canonical":
            return self.d
        if self.kind == "sym_vech":
            return self.d * (self.d + 1) // 2
        if self.kind == "cosine_tensor2d":
            return self.R[0] * self.R[1]
        if self.kind == "graph_laplacian":
            return self.R
        return self.R * self.channels

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "M": self.M}
        if self.kind in ("canonical", "sym_vech"):
            out["d"] = self.d
        else:
            out["R"] = list(self.R) if isinstance(self.R, tuple) else self.R
        if self.kind == "graph_laplacian":
            out["alpha"] = self.alpha
        if self.channels != 1:
            out["channels"] = self.channels
        return out


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """n x M matrix of coordinates together with the basis that produced them."""

    data: np.ndarray
    basis: BasisSpec
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        X = np.asarray(self.data, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("coefficient matrix must be n x M with n >= 1")
        if X.shape[1] != self.basis.M:
            raise ValueError(f"coefficient width {X.shape[1]} != basis dimension {self.basis.M}")
        if not np.all(np.isfinite(X)):
            raise ValueError("coefficients must be finite")
        X.setflags(write=False)
        object.__setattr__(self, "data", X)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def M(self) -> int:
        return self.data.shape[1]

    @classmethod
    def euclidean(cls, X) -> "CoefficientMatrix":
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return cls(X, BasisSpec("canonical", d=X.shape[1]))


@dataclass(frozen=True)
class WeightedGraph:
    num_nodes: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("graph needs at least one node")
        clean = []
        for i, j, w in self.edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range")
            if not (w > 0 and np.isfinite(w)):
                raise ValueError(f"edge ({i}, {j}) has non-positive weight {w}")
            clean.append((min(i, j), max(i, j), w))
        object.__setattr__(self, "edges", tuple(clean))

    def laplacian(self) -> np.ndarray:
        W = np.zeros((self.num_nodes, self.num_nodes))
        for i, j, w in self.edges:
            W[i, j] += w
            W[j, i] += w
        return np.diag(W.sum(axis=1)) - W


# ---------------------------------------------------------------------------
# basis functions


def cosine_functions(R: int, t: np.ndarray) -> np.ndarray:
    """R x T matrix of L^2-orthonormal cosines evaluated at ``t``."""
    t = np.asarray(t, dtype=float)
    r = np.arange(R)[:, None]
    E = np.sqrt(2.0) * np.cos(np.pi * r * t[None, :])
    E[0] = 1.0
    return E


def _h1_scale(R: int) -> np.ndarray:
    return np.sqrt(1.0 + (np.pi * np.arange(R)) ** 2)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def laplacian_eigenbasis(g: WeightedGraph, alpha: float, R: int) -> BasisSpec:
    """Leading ``R`` Laplacian eigenvectors, scaled so that ``e^T (L + alpha I) e = 1``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if R < 1 or R > g.num_nodes:
        raise ValueError(f"R={R} must be between 1 and num_nodes={g.num_nodes}")
    lam, U = np.linalg.eigh(g.laplacian())
    lam = np.where(np.abs(lam) < 1e-12, 0.0, lam)
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > 1e-12)
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
    # ties: ascending index of the largest-magnitude entry
    tol = 1e-10 * max(1.0, float(np.max(np.abs(lam))))
    cluster = np.zeros(lam.size, dtype=int)
    for j in range(1, lam.size):
        cluster[j] = cluster[j - 1] + (lam[j] - lam[j - 1] > tol)
    peak = np.argmax(np.abs(U), axis=0)
    order = np.lexsort((peak, cluster))[:R]
    return BasisSpec(
        "graph_laplacian",
        R=R,
        alpha=float(alpha),
        eigenvalues=lam[order].copy(),
        eigenvectors=U[:, order].copy(),
    )


def graph_basis_vectors(basis: BasisSpec) -> np.ndarray:
    """|V| x R matrix whose columns are the rescaled basis vectors ``e_j``."""
    if basis.eigenvectors is None:
        raise ValueError("graph basis has no stored eigenvectors")
    return basis.eigenvectors / np.sqrt(basis.eigenvalues + basis.alpha)


def graph_inner_product(basis: BasisSpec, laplacian: np.ndarray):
    """Bilinear form ``(f, g) -> f^T (L + alpha I) g``."""
    A = laplacian + basis.alpha * np.eye(laplacian.shape[0])
    return lambda f, g: np.asarray(f) @ A @ np.asarray(g)


# ---------------------------------------------------------------------------
# vech


def vech(A: np.ndarray) -> np.ndarray:
    """Diagonal entries first, then sqrt(2) * A[i, j] for i < j in row-major order."""
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    iu = np.triu_indices(d, k=1)
    diag = np.diagonal(A, axis1=-2, axis2=-1)
    return np.concatenate([diag, np.sqrt(2.0) * A[..., iu[0], iu[1]]], axis=-1)


def unvech(v: np.ndarray, d: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    A = np.zeros(v.shape[:-1] + (d, d))
    idx = np.arange(d)
    A[..., idx, idx] = v[..., :d]
    iu = np.triu_indices(d, k=1)
    off = v[..., d:] / np.sqrt(2.0)
    A[..., iu[0], iu[1]] = off
    A[..., iu[1], iu[0]] = off
    return A


# ---------------------------------------------------------------------------
# projection


def _require_grid(basis: BasisSpec, T: int) -> np.ndarray:
    grid = basis.grid if basis.grid is not None else np.linspace(0.0, 1.0, T)
    if grid.size != T:
        raise ValueError(f"raw data has {T} samples per curve but the grid has {grid.size}")
    return grid


def _check_coarseness(grid, R):
    if grid.size < 2 * R:
        raise ValueError(f"grid too coarse: {grid.size} points for R={R} (need >= {2 * R})")


def _finite(raw):
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw observations must be finite")
    return raw


def project(raw, basis: BasisSpec) -> CoefficientMatrix:
    """Coordinates ``<X_i, e_r>`` of each raw observation.

    Raw layouts per kind: ``canonical`` n x d; ``cosine_l2`` n x T or
    n x channels x T; ``cosine_h1`` n x T; ``cosine_tensor2d`` n x T x T;
    ``graph_laplacian`` n x |V|; ``sym_vech`` a sequence of d x d matrices.
    """
    raw = _finite(raw)
    kind = basis.kind
    if kind == "canonical":
        X = raw[:, None] if raw.ndim == 1 else raw
        if X.ndim != 2 or X.shape[1] != basis.d:
            raise ValueError(f"expected n x {basis.d} data, got shape {raw.shape}")
        return CoefficientMatrix(X.copy(), basis)

    if kind == "sym_vech":
        if raw.ndim != 3 or raw.shape[1:] != (basis.d, basis.d):
            raise ValueError(f"expected n x {basis.d} x {basis.d} matrices, got {raw.shape}")
        if not np.allclose(raw, np.swapaxes(raw, 1, 2), atol=1e-12, rtol=0):
            raise ValueError("matrices must be symmetric")
        return CoefficientMatrix(vech(raw), basis)

    if kind == "graph_laplacian":
        if basis.eigenvectors is None:
            raise ValueError("graph basis has no stored eigenvectors")
        if raw.ndim != 2 or raw.shape[1] != basis.eigenvectors.shape[0]:
            raise ValueError(
                f"expected n x {basis.eigenvectors.shape[0]} node signals, got {raw.shape}"
            )
        # <f, e_j> = f^T (L + alpha I) u_j / sqrt(lam_j + alpha) = sqrt(lam_j + alpha) u_j^T f
        return CoefficientMatrix(
            (raw @ basis.eigenvectors) * np.sqrt(basis.eigenvalues + basis.alpha), basis
        )

    if kind == "cosine_tensor2d":
        if raw.ndim != 3:
            raise ValueError(f"expected n x T_s x T_t surfaces, got shape {raw.shape}")
        Rs, Rt = basis.R
        gs = _require_grid(basis, raw.shape[1])
        gt = _require_grid(basis, raw.shape[2])
        _check_coarseness(gs, Rs)
        _check_coarseness(gt, Rt)
        Es = cosine_functions(Rs, gs) * trapezoid_weights(gs)
        Et = cosine_functions(Rt, gt) * trapezoid_weights(gt)
        C = np.einsum("as,nst,bt->nab", Es, raw, Et)
        return CoefficientMatrix(C.reshape(raw.shape[0], Rs * Rt), basis)

    # one-dimensional function bases
    if kind == "cosine_l2" and raw.ndim == 3:
        if raw.shape[1] != basis.channels:
            raise ValueError(f"expected {basis.channels} channels, got {raw.shape[1]}")
        curves = raw
    elif raw.ndim == 2 and basis.channels == 1:
        curves = raw[:, None, :]
    else:
        raise ValueError(f"unexpected raw shape {raw.shape} for {kind}")
    n, ch, T = curves.shape
    grid = _require_grid(basis, T)
    _check_coarseness(grid, basis.R)
    w = trapezoid_weights(grid)
    E = cosine_functions(basis.R, grid)
    C = np.einsum("nct,rt->ncr", curves * w, E)
    if kind == "cosine_h1":
        if basis.h1_quadrature == "parts":
            # cosines have vanishing derivative at both ends, so
            # int f' e_r' = pi^2 r^2 int f e_r
            C = C * _h1_scale(basis.R)
        else:
            dE = _h1_derivatives(basis.R, grid)
            df = np.gradient(curves, grid, axis=2)
            C = C / _h1_scale(basis.R) + np.einsum("nct,rt->ncr", df * w, dE)
    return CoefficientMatrix(C.reshape(n, ch * basis.R), basis)


def _h1_derivatives(R: int, grid: np.ndarray) -> np.ndarray:
    """Derivatives of the H^1-rescaled cosines, by the same differences applied to data."""
    E = cosine_functions(R, grid) / _h1_scale(R)[:, None]
    return np.gradient(E, grid, axis=1)


def reconstruct(coeffs, grid=None, basis: BasisSpec | None = None) -> np.ndarray:
    """Evaluate ``sum_r c_r e_r`` for every coefficient row.

    For function bases ``grid`` gives the evaluation points (for the tensor
    basis the same grid is used on both axes).  Graph bases return node
    signals, ``sym_vech`` returns d x d matrices, ``canonical`` the vectors.
    """
    if basis is None:
        basis = coeffs.basis
    C = np.asarray(getattr(coeffs, "data", coeffs), dtype=float)
    if C.ndim == 1:
        C = C[None, :]
    if C.shape[1] != basis.M:
        raise ValueError(f"coefficient width {C.shape[1]} != basis dimension {basis.M}")
    kind = basis.kind
    if kind == "canonical":
        return C.copy()
    if kind == "sym_vech":
        return unvech(C, basis.d)
    if kind == "graph_laplacian":
        return C @ graph_basis_vectors(basis).T
    if grid is None:
        grid = basis.grid
    if grid is None:
        raise ValueError("a grid is required to reconstruct functions")
    grid = np.asarray(grid, dtype=float)
    if kind == "cosine_tensor2d":
        Rs, Rt = basis.R
        A = C.reshape(-1, Rs, Rt)
        return np.einsum("nab,as,bt->nst", A, cosine_functions(Rs, grid), cosine_functions(Rt, grid))
    E = cosine_functions(basis.R, grid)
    if kind == "cosine_h1":
        E = E / _h1_scale(basis.R)[:, None]
    out = np.einsum("ncr,rt->nct", C.reshape(C.shape[0], -1, basis.R), E)
    return out[:, 0, :] if basis.channels == 1 else out


def gram(basis: BasisSpec, laplacian: np.ndarray | None = None) -> np.ndarray:
    """Gram matrix of the first M basis elements under the basis's own inner product.

    Function bases are sampled on ``basis.grid`` and integrated with the same
    quadrature as :func:`project`.
    """
    kind = basis.kind
    if kind in ("canonical",):
        return np.eye(basis.M)
    if kind == "sym_vech":
        E = unvech(np.eye(basis.M), basis.d)
        return np.einsum("aij,bij->ab", E, E)
    if kind == "graph_laplacian":
        if laplacian is None:
            raise ValueError("graph Gram matrix needs the Laplacian")
        V = graph_basis_vectors(basis)
        return V.T @ (laplacian + basis.alpha * np.eye(laplacian.shape[0])) @ V
    grid = basis.grid if basis.grid is not None else np.linspace(0.0, 1.0, 8 * max(np.ravel(basis.R)))
    sampled = reconstruct(np.eye(basis.M), grid, basis)
    if kind == "cosine_tensor2d":
        spec = BasisSpec(kind, R=basis.R, grid=grid)
        return project(sampled, spec).data
    spec = BasisSpec(kind, R=basis.R, grid=grid, channels=basis.channels, h1_quadrature=basis.h1_quadrature)
    return project(sampled, spec).data


def stack(parts: Sequence[CoefficientMatrix]) -> CoefficientMatrix:
    if not parts:
        raise ValueError("nothing to stack")
    return CoefficientMatrix(np.vstack([p.data for p in parts]), parts[0].basis)
