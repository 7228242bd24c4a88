"""Mixture state, posterior responsibilities and sampling in coefficient space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .basis import BasisSpec, CoefficientMatrix
from .kernels import DEFAULT_RIDGE, GaussianComponent, KernelSpec, _as_rows

SIMPLEX_TOL = 1e-12
RNG_ALGORITHM = "PCG64"  # numpy.random.Generator bit generator, seeded via SeedSequence


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True, eq=False)
class MixtureState:
    """Weights on the simplex, K Gaussian components and the kernel used to fit them."""

    weights: np.ndarray
    components: tuple[GaussianComponent, ...]
    kernel: KernelSpec | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if len(comps) < 1:
            raise ValueError("a mixture needs at least one component")
        if w.shape[0] != len(comps):
            raise ValueError(f"{w.shape[0]} weights for {len(comps)} components")
        if np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_TOL * max(1, len(w)) * 10:
            raise ValueError(f"weights must lie on the simplex, got {w}")
        if len({c.dim for c in comps}) != 1:
            raise ValueError("all components must share the same dimension")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def M(self) -> int:
        return self.components[0].dim

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    def replace(self, weights=None, components=None, kernel=None) -> "MixtureState":
        return MixtureState(
            self.weights if weights is None else weights,
            self.components if components is None else components,
            self.kernel if kernel is None else kernel,
        )

    def permuted(self, perm: Sequence[int]) -> "MixtureState":
        perm = list(perm)
        return MixtureState(self.weights[perm], [self.components[k] for k in perm], self.kernel)

    def truncated(self, M: int) -> "MixtureState":
        """Marginal mixture on the first ``M`` coordinates."""
        comps = []
        for c in self.components:
            if c.cov_type == "diag":
                comps.append(GaussianComponent(c.mean[:M], c.factor[:M], "diag", c.ridge))
            else:
                # leading block of L L^T is L[:M, :M] L[:M, :M]^T
                comps.append(GaussianComponent(c.mean[:M], c.factor[:M, :M], "full", c.ridge))
        return MixtureState(self.weights, comps, self.kernel)


def log_densities(data, mix: MixtureState, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """n x K matrix of ``log N(x_i; m_k, K_k + ridge I)``."""
    X = _as_rows(data)
    if not np.all(np.isfinite(X)):
        raise ValueError("data must be finite")
    if X.shape[1] != mix.M:
        raise ValueError(f"data dimension {X.shape[1]} != model dimension {mix.M}")
    n, M = X.shape
    out = np.empty((n, mix.K))
    const = M * np.log(2.0 * np.pi)
    for k, comp in enumerate(mix.components):
        R = X - comp.mean
        if comp.cov_type == "diag":
            var = comp.variances() + ridge
            if np.any(var <= 0):
                raise ValueError(f"component {k} has a singular covariance; use ridge > 0")
            out[:, k] = -0.5 * (const + np.sum(np.log(var)) + (R * R) @ (1.0 / var))
        else:
            cov = comp.covariance() + ridge * np.eye(M)
            try:
                C = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise ValueError(f"component {k} has a singular covariance; use ridge > 0") from exc
            Z = np.linalg.solve(C, R.T)
            out[:, k] = -0.5 * (const + 2.0 * np.sum(np.log(np.diag(C))) + np.sum(Z * Z, axis=0))
    return out


def _weighted_log_joint(data, mix, ridge):
    with np.errstate(divide="ignore"):
        logw = np.log(mix.weights)
    return log_densities(data, mix, ridge) + logw


def responsibilities(data, mix: MixtureState, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Posterior component probabilities ``pi_k p_k(x) / sum_s pi_s p_s(x)``."""
    joint = _weighted_log_joint(data, mix, ridge)
    gamma = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
    gamma[:, mix.weights == 0] = 0.0
    return gamma


def hard_labels(gamma: np.ndarray) -> np.ndarray:
    """Row argmax; ties resolve to the lowest index."""
    return np.argmax(gamma, axis=1)


def mixture_loglik(data, mix: MixtureState, ridge: float = 0.0) -> float:
    """``sum_i log sum_k pi_k N(x_i; m_k, K_k)``."""
    return float(np.sum(logsumexp(_weighted_log_joint(data, mix, ridge), axis=1)))


def sample(mix: MixtureState, n: int, seed: int, basis: BasisSpec | None = None):
    """Draw ``n`` points and their component labels.

    Returns ``(CoefficientMatrix, labels)``.  ``X | Z=k`` is drawn through the
    stored factor: ``m_k + L_k z + sqrt(ridge) z'``.
    """
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    labels = rng.choice(mix.K, size=int(n), p=mix.weights)
    M = mix.M
    X = np.empty((int(n), M))
    noise = rng.standard_normal((int(n), M))
    extra = rng.standard_normal((int(n), M))
    for k, comp in enumerate(mix.components):
        idx = labels == k
        if not np.any(idx):
            continue
        if comp.cov_type == "diag":
            draw = noise[idx] * comp.factor
        else:
            draw = noise[idx] @ comp.factor.T
        X[idx] = comp.mean + draw + np.sqrt(comp.ridge) * extra[idx]
    if basis is None:
        basis = BasisSpec("canonical", d=M)
    return CoefficientMatrix(X, basis), labels
