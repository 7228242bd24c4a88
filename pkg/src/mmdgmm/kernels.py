"""Closed-form kernel expectations under Gaussian components in R^M.

For a Gaussian component ``N(m, K)`` and a kernel ``k`` this module evaluates

* ``J(x) = E_{Y ~ N(m, K)} k(x, Y)`` (data-to-component), and
* ``I(a, b) = E_{Y ~ a, Y' ~ b} k(Y, Y')`` (component-to-component),

for the isotropic Gaussian radial kernel ``exp(-|x - y|^2 / (2 sigma^2))`` and the
polynomial kernel ``(<x, y> + c)^p`` with ``p <= 3``.  Gaussian forms are
evaluated in the log domain through the spectrum of ``K``.

The ``*_partials`` helpers return exact derivatives of these expectations with
respect to component means and covariances; the objective module chains them
through the covariance factorisation.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial
from typing import Sequence

import numpy as np

DEFAULT_RIDGE = 1e-6
MAX_POLY_DEGREE = 3


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice: ``gaussian`` (bandwidth ``sigma``) or ``polynomial`` (``degree``, ``c``)."""

    variant: str
    sigma: float | None = None
    degree: int | None = None
    c: float | None = None

    def __post_init__(self):
        if self.variant == "gaussian":
            if self.sigma is None or not np.isfinite(self.sigma) or self.sigma <= 0:
                raise ValueError(f"gaussian kernel needs sigma > 0, got {self.sigma!r}")
        elif self.variant == "polynomial":
            if self.degree not in (1, 2, 3):
                raise ValueError(
                    f"polynomial degree must be 1, 2 or 3 (got {self.degree!r}); "
                    "higher moments are not supported"
                )
            if self.c is None or not np.isfinite(self.c) or self.c < 0:
                raise ValueError(f"polynomial offset c must be >= 0, got {self.c!r}")
        else:
            raise ValueError(f"unknown kernel variant {self.variant!r}")

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def polynomial(cls, degree: int = 2, c: float = 1.0) -> "KernelSpec":
        return cls("polynomial", degree=int(degree), c=float(c))

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Evaluate the kernel row-wise on broadcastable arrays of points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.variant == "gaussian":
            return np.exp(-0.5 * np.sum((x - y) ** 2, axis=-1) / self.sigma**2)
        return (np.sum(x * y, axis=-1) + self.c) ** self.degree


def psd_cholesky(S: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == S`` for symmetric PSD ``S``.

    Falls back to a pivot-free semidefinite Cholesky (zero columns for null
    directions) when ``S`` is singular.
    """
    S = np.asarray(S, dtype=float)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    M = S.shape[0]
    L = np.zeros_like(S)
    scale = max(float(np.max(np.abs(np.diag(S)))) if M else 0.0, 1.0)
    for j in range(M):
        d = S[j, j] - L[j, :j] @ L[j, :j]
        if d <= tol * scale:
            if d < -1e-8 * scale:
                raise ValueError("matrix is not positive semidefinite")
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1 :, j] = (S[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """A Gaussian ``N(mean, K)`` in R^M stored through a covariance factor.

    ``cov_type="full"``: ``factor`` is lower triangular ``L`` and
    ``K = L L^T + ridge * I``.
    ``cov_type="diag"``: ``factor`` is a scale vector ``s`` and
    ``K = diag(s^2) + ridge * I``.
    """

    mean: np.ndarray
    factor: np.ndarray
    cov_type: str = "full"
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        factor = np.asarray(self.factor, dtype=float)
        M = mean.shape[0]
        if self.cov_type == "full":
            if factor.shape != (M, M):
                raise ValueError(f"full factor must be {M}x{M}, got {factor.shape}")
            factor = np.tril(factor)
        elif self.cov_type == "diag":
            factor = factor.reshape(-1)
            if factor.shape != (M,):
                raise ValueError(f"diag factor must have length {M}, got {factor.shape}")
        else:
            raise ValueError(f"unknown covariance type {self.cov_type!r}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(factor))):
            raise ValueError("component parameters must be finite")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "factor", factor)
        object.__setattr__(self, "ridge", float(self.ridge))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_covariance(
        cls, mean, cov, cov_type: str = "full", ridge: float = 0.0
    ) -> "GaussianComponent":
        """Build a component whose covariance equals ``cov``.

        ``cov`` may be an M x M matrix or, for ``cov_type="diag"``, a variance
        vector.  The stored factor represents ``cov - ridge * I``, which must be
        PSD.
        """
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.asarray(cov, dtype=float)
        M = mean.shape[0]
        if cov_type == "diag":
            var = np.diag(cov) if cov.ndim == 2 else cov.reshape(-1)
            rest = var - ridge
            if np.any(rest < -1e-12 * max(1.0, float(np.max(np.abs(var))))):
                raise ValueError("variances must be >= ridge")
            return cls(mean, np.sqrt(np.clip(rest, 0.0, None)), "diag", ridge)
        if cov.shape != (M, M):
            raise ValueError(f"covariance must be {M}x{M}, got {cov.shape}")
        S = 0.5 * (cov + cov.T) - ridge * np.eye(M)
        return cls(mean, psd_cholesky(S), "full", ridge)

    def covariance(self) -> np.ndarray:
        if self.cov_type == "diag":
            return np.diag(self.factor**2 + self.ridge)
        return self.factor @ self.factor.T + self.ridge * np.eye(self.dim)

    def variances(self) -> np.ndarray:
        """Diagonal of the covariance."""
        if self.cov_type == "diag":
            return self.factor**2 + self.ridge
        return np.sum(self.factor**2, axis=1) + self.ridge

    def with_params(self, mean=None, factor=None) -> "GaussianComponent":
        return GaussianComponent(
            self.mean if mean is None else mean,
            self.factor if factor is None else factor,
            self.cov_type,
            self.ridge,
        )


def _check_point(x, M):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != M:
        raise ValueError(f"point has dimension {x.shape[0]}, component has {M}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    return x


def _spectrum(cov: np.ndarray):
    try:
        lam, V = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ValueError("eigendecomposition failed; increase the ridge") from exc
    return np.clip(lam, 0.0, None), V


def _log_gaussian_expectation(R: np.ndarray, lam: np.ndarray, V, sigma: float):
    """Rows of ``R`` are offsets ``x - m``; ``lam, V`` the spectrum of the covariance."""
    s2 = sigma * sigma
    Z = R if V is None else R @ V
    return -0.5 * np.sum(np.log1p(lam / s2)) - 0.5 * (Z * Z) @ (1.0 / (s2 + lam))


def log_gaussian_J(x, comp: GaussianComponent, sigma: float) -> float:
    """``log E_{Y ~ comp} exp(-|x - Y|^2 / (2 sigma^2))``."""
    x = _check_point(x, comp.dim)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if comp.cov_type == "diag":
        lam, V = comp.variances(), None
    else:
        lam, V = _spectrum(comp.covariance())
    return float(_log_gaussian_expectation((x - comp.mean)[None, :], lam, V, sigma)[0])


def _sum_cov(a: GaussianComponent, b: GaussianComponent):
    if a.cov_type == "diag" and b.cov_type == "diag":
        return a.variances() + b.variances(), True
    return a.covariance() + b.covariance(), False


def log_gaussian_I(a: GaussianComponent, b: GaussianComponent, sigma: float) -> float:
    """``log E k(Y, Y')`` for independent ``Y ~ a``, ``Y' ~ b`` under the Gaussian kernel."""
    if a.dim != b.dim:
        raise ValueError("components have different dimensions")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    cov, is_diag = _sum_cov(a, b)
    if is_diag:
        lam, V = cov, None
    else:
        lam, V = _spectrum(cov)
    d = (a.mean - b.mean)[None, :]
    return float(_log_gaussian_expectation(d, lam, V, sigma)[0])


def _poly_J_coeffs(p: int):
    return [
        (t, factorial(p) / (factorial(p - 2 * t) * 2**t * factorial(t)))
        for t in range(p // 2 + 1)
    ]


def poly_J(x, comp: GaussianComponent, degree: int, c: float) -> float:
    """``E_{Y ~ comp} (<x, Y> + c)^degree``."""
    x = _check_point(x, comp.dim)
    KernelSpec.polynomial(degree, c)  # validates
    return float(_poly_J_rows(x[None, :], comp, degree, c)[0])


def _quad_rows(X: np.ndarray, comp: GaussianComponent) -> np.ndarray:
    """``x_i^T K x_i`` for every row."""
    if comp.cov_type == "diag":
        return (X * X) @ comp.variances()
    XL = X @ comp.factor
    return np.sum(XL * XL, axis=1) + comp.ridge * np.sum(X * X, axis=1)


def _poly_J_rows(X, comp, p, c):
    mu = X @ comp.mean + c
    v = _quad_rows(X, comp)
    return sum(a * v**t * mu ** (p - 2 * t) for t, a in _poly_J_coeffs(p))


def _poly_moments(a: GaussianComponent, b: GaussianComponent):
    """Scalars entering E[Z^r] for ``Z = Y^T Y'``."""
    Ka, Kb = a.covariance(), b.covariance()
    # numpy scalars so that overflow yields inf instead of raising
    ab = np.float64(a.mean @ b.mean)
    aKb_a = np.float64(a.mean @ Kb @ a.mean)
    bKa_b = np.float64(b.mean @ Ka @ b.mean)
    tr = np.float64(np.sum(Ka * Kb))
    cross = np.float64(a.mean @ Kb @ Ka @ b.mean)
    return Ka, Kb, ab, aKb_a, bKa_b, tr, cross


def _z_moments(ab, aKb_a, bKa_b, tr, cross):
    q = aKb_a + bKa_b + tr
    return [1.0, ab, ab * ab + q, ab**3 + 3.0 * ab * q + 6.0 * cross]


def poly_I(a: GaussianComponent, b: GaussianComponent, degree: int, c: float) -> float:
    """``E (<Y, Y'> + c)^degree`` for independent ``Y ~ a``, ``Y' ~ b``; ``degree <= 3``."""
    if degree not in (1, 2, 3):
        raise ValueError(f"polynomial degree {degree!r} unsupported (max {MAX_POLY_DEGREE})")
    if a.dim != b.dim:
        raise ValueError("components have different dimensions")
    _, _, *scalars = _poly_moments(a, b)
    EZ = _z_moments(*scalars)
    return float(sum(comb(degree, r) * c ** (degree - r) * EZ[r] for r in range(degree + 1)))


def _as_rows(data) -> np.ndarray:
    X = np.asarray(getattr(data, "data", data), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("data must be a non-empty n x M matrix")
    return X


def cross_matrix(data, comps: Sequence[GaussianComponent], kernel: KernelSpec) -> np.ndarray:
    """n x K matrix of ``J_{i,k}``."""
    X = _as_rows(data)
    out = np.empty((X.shape[0], len(comps)))
    for k, comp in enumerate(comps):
        if comp.dim != X.shape[1]:
            raise ValueError(f"data dimension {X.shape[1]} != component dimension {comp.dim}")
        out[:, k] = _cross_column(X, comp, kernel)
    return out


def _cross_column(X, comp, kernel):
    if kernel.variant == "gaussian":
        if comp.cov_type == "diag":
            lam, V = comp.variances(), None
        else:
            lam, V = _spectrum(comp.covariance())
        return np.exp(_log_gaussian_expectation(X - comp.mean, lam, V, kernel.sigma))
    return _poly_J_rows(X, comp, kernel.degree, kernel.c)


def pair_value(a: GaussianComponent, b: GaussianComponent, kernel: KernelSpec) -> float:
    if kernel.variant == "gaussian":
        return float(np.exp(log_gaussian_I(a, b, kernel.sigma)))
    return poly_I(a, b, kernel.degree, kernel.c)


def gram_matrix(comps: Sequence[GaussianComponent], kernel: KernelSpec) -> np.ndarray:
    """K x K matrix of ``I_{k,s}`` (symmetric by construction)."""
    K = len(comps)
    out = np.empty((K, K))
    for k in range(K):
        for s in range(k, K):
            out[k, s] = out[s, k] = pair_value(comps[k], comps[s], kernel)
    return out


# ---------------------------------------------------------------------------
# derivatives
#
# Covariance gradients are returned as a symmetric M x M matrix G (full) or its
# diagonal (diag) such that dF = <G, dK>.


def _shape_cov_grad(G: np.ndarray, comp: GaussianComponent) -> np.ndarray:
    if comp.cov_type == "diag":
        return np.diag(G).copy() if G.ndim == 2 else G
    return G if G.ndim == 2 else np.diag(G)


def cross_partials(X: np.ndarray, comp: GaussianComponent, kernel: KernelSpec, w: np.ndarray):
    """Value and gradient of ``sum_i w_i J(x_i; comp)``.

    Returns ``(J, grad_mean, grad_cov)`` where ``J`` is the per-row vector.
    """
    if kernel.variant == "gaussian":
        s2 = kernel.sigma**2
        R = X - comp.mean
        if comp.cov_type == "diag":
            lam = comp.variances()
            b = 1.0 / (s2 + lam)
            logJ = -0.5 * np.sum(np.log1p(lam / s2)) - 0.5 * (R * R) @ b
            J = np.exp(logJ)
            wJ = w * J
            U = R * b
            g_mean = wJ @ U
            g_cov = -0.5 * np.sum(wJ) * b + 0.5 * wJ @ (U * U)
            return J, g_mean, g_cov
        lam, V = _spectrum(comp.covariance())
        inv = 1.0 / (s2 + lam)
        Z = R @ V
        logJ = -0.5 * np.sum(np.log1p(lam / s2)) - 0.5 * (Z * Z) @ inv
        J = np.exp(logJ)
        wJ = w * J
        B = (V * inv) @ V.T
        U = R @ B
        g_mean = wJ @ U
        g_cov = -0.5 * np.sum(wJ) * B + 0.5 * (U.T * wJ) @ U
        return J, g_mean, 0.5 * (g_cov + g_cov.T)

    p, c = kernel.degree, kernel.c
    mu = X @ comp.mean + c
    v = _quad_rows(X, comp)
    J = np.zeros_like(mu)
    dmu = np.zeros_like(mu)
    dv = np.zeros_like(mu)
    for t, a in _poly_J_coeffs(p):
        e = p - 2 * t
        J += a * v**t * mu**e
        if e > 0:
            dmu += a * e * v**t * mu ** (e - 1)
        if t > 0:
            dv += a * t * v ** (t - 1) * mu**e
    g_mean = (w * dmu) @ X
    wv = w * dv
    if comp.cov_type == "diag":
        g_cov = wv @ (X * X)
    else:
        g_cov = (X.T * wv) @ X
    return J, g_mean, g_cov


def pair_partials(a: GaussianComponent, b: GaussianComponent, kernel: KernelSpec):
    """``I(a, b)`` and its derivatives w.r.t. both components.

    Returns ``(I, gm_a, gK_a, gm_b, gK_b)``.
    """
    if kernel.variant == "gaussian":
        s2 = kernel.sigma**2
        d = a.mean - b.mean
        cov, is_diag = _sum_cov(a, b)
        if is_diag:
            inv = 1.0 / (s2 + cov)
            u = d * inv
            logI = -0.5 * np.sum(np.log1p(cov / s2)) - 0.5 * d @ u
            val = float(np.exp(logI))
            G = val * (-0.5 * inv + 0.5 * u * u)
        else:
            lam, V = _spectrum(cov)
            inv = 1.0 / (s2 + lam)
            B = (V * inv) @ V.T
            u = B @ d
            z = V.T @ d
            logI = -0.5 * np.sum(np.log1p(lam / s2)) - 0.5 * (z * z) @ inv
            val = float(np.exp(logI))
            G = val * (-0.5 * B + 0.5 * np.outer(u, u))
            G = 0.5 * (G + G.T)
        return (
            val,
            -val * u,
            _shape_cov_grad(G, a),
            val * u,
            _shape_cov_grad(G, b),
        )

    p, c = kernel.degree, kernel.c
    val = poly_I(a, b, p, c)
    gm_a, gK_a = _poly_pair_first_partial(a, b, p, c)
    gm_b, gK_b = _poly_pair_first_partial(b, a, p, c)
    return val, gm_a, _shape_cov_grad(gK_a, a), gm_b, _shape_cov_grad(gK_b, b)


def _poly_pair_first_partial(a, b, p, c):
    """Derivative of ``I(a, b)`` w.r.t. the mean and covariance of ``a``."""
    Ka, Kb, ab, aKb_a, bKa_b, tr, _ = _poly_moments(a, b)
    ma, mb = a.mean, b.mean
    q = aKb_a + bKa_b + tr
    Kb_ma = Kb @ ma
    # dE_r / d m_a
    dm = [
        np.zeros_like(ma),
        mb,
        2.0 * ab * mb + 2.0 * Kb_ma,
        3.0 * ab * ab * mb + 3.0 * q * mb + 6.0 * ab * Kb_ma + 6.0 * (Kb @ Ka @ mb),
    ]
    bb = np.outer(mb, mb)
    cross = np.outer(Kb_ma, mb)
    dK = [
        np.zeros_like(Ka),
        np.zeros_like(Ka),
        bb + Kb,
        3.0 * ab * (bb + Kb) + 3.0 * (cross + cross.T),
    ]
    g_m = np.zeros_like(ma)
    g_K = np.zeros_like(Ka)
    for r in range(1, p + 1):
        coef = comb(p, r) * c ** (p - r)
        g_m = g_m + coef * dm[r]
        g_K = g_K + coef * dK[r]
    return g_m, g_K
