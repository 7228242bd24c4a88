"""Projected squared MMD between the empirical measure and a mixture, with exact gradients.

    MMD^2 = (1/n^2) sum_ij k(x_i, x_j) - (2/n) sum_i sum_k pi_k J_ik + pi^T I pi

The first (data-data) term does not depend on the mixture and is only
evaluated on request.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .kernels import (
    GaussianComponent,
    KernelSpec,
    _as_rows,
    cross_matrix,
    cross_partials,
    gram_matrix,
    pair_partials,
)
from .mixture import MixtureState


@dataclass(frozen=True)
class LossBreakdown:
    cross: float
    gram: float
    data_data: float | None = None

    @property
    def total_without_constant(self) -> float:
        return self.gram - 2.0 * self.cross

    @property
    def total(self) -> float | None:
        if self.data_data is None:
            return None
        return self.data_data - 2.0 * self.cross + self.gram


@dataclass(frozen=True)
class Gradient:
    """Gradient of ``total_without_constant``.

    ``factors[k]`` matches the shape of ``components[k].factor``.
    """

    means: np.ndarray
    factors: list
    weights: np.ndarray


def data_term(data, kernel: KernelSpec, block: int = 2048) -> float:
    """``(1/n^2) sum_ij k(x_i, x_j)``; cached on ``CoefficientMatrix`` inputs."""
    cache = getattr(data, "_cache", None)
    key = ("data_term", kernel)
    if cache is not None and key in cache:
        return cache[key]
    X = _as_rows(data)
    n = X.shape[0]
    if kernel.variant == "gaussian":
        # off-diagonal pairs counted twice, diagonal contributes n
        total = n + 2.0 * float(np.sum(np.exp(-0.5 * pdist(X, "sqeuclidean") / kernel.sigma**2)))
    else:
        total = 0.0
        for start in range(0, n, block):
            G = X[start : start + block] @ X.T + kernel.c
            total += float(np.sum(G**kernel.degree))
    value = total / n**2
    if cache is not None:
        cache[key] = value
    return value


def _kernel_of(mix: MixtureState, kernel: KernelSpec | None) -> KernelSpec:
    kernel = kernel or mix.kernel
    if kernel is None:
        raise ValueError("no kernel given and the mixture carries none")
    return kernel


def mmd2(data, mix: MixtureState, include_constant: bool = False, kernel: KernelSpec | None = None) -> LossBreakdown:
    kernel = _kernel_of(mix, kernel)
    X = _as_rows(data)
    if X.shape[1] != mix.M:
        raise ValueError(f"data dimension {X.shape[1]} != model dimension {mix.M}")
    Jbar = cross_matrix(X, mix.components, kernel).mean(axis=0)
    I = gram_matrix(mix.components, kernel)
    pi = mix.weights
    return LossBreakdown(
        cross=float(pi @ Jbar),
        gram=float(pi @ I @ pi),
        data_data=data_term(data, kernel) if include_constant else None,
    )


def factor_gradient(comp: GaussianComponent, g_cov: np.ndarray) -> np.ndarray:
    """Chain ``dF/dK`` through ``K = L L^T + ridge I`` (or ``diag(s^2) + ridge``)."""
    if comp.cov_type == "diag":
        return 2.0 * comp.factor * g_cov
    return np.tril(2.0 * g_cov @ comp.factor)


def _map(workers, fn, items):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class PairTerms:
    """``I_ks`` for all pairs together with their partial derivatives.

    ``gradient(W)`` returns the mean and covariance gradients of
    ``sum_ks W_ks I_ks`` for a symmetric weight matrix ``W``.
    """

    def __init__(self, comps: Sequence[GaussianComponent], kernel: KernelSpec):
        K = len(comps)
        self.comps = list(comps)
        self.values = np.empty((K, K))
        self._partials = {}
        for k in range(K):
            for s in range(k, K):
                val, *parts = pair_partials(comps[k], comps[s], kernel)
                self.values[k, s] = self.values[s, k] = val
                self._partials[k, s] = parts

    def gradient(self, W: np.ndarray):
        g_mean = [np.zeros(c.dim) for c in self.comps]
        g_cov = [np.zeros_like(c.factor) for c in self.comps]
        for (k, s), (gm_a, gK_a, gm_b, gK_b) in self._partials.items():
            w = W[k, s] if k == s else W[k, s] + W[s, k]
            g_mean[k] += w * gm_a
            g_cov[k] += w * gK_a
            g_mean[s] += w * gm_b
            g_cov[s] += w * gK_b
        return g_mean, g_cov


class CrossTerms:
    """``J_ik`` for one dataset and the gradients of each column mean ``Jbar_k``.

    The column gradients are linear in their coefficients, so they are formed
    once and rescaled by ``gradient(coef)``.
    """

    def __init__(self, X: np.ndarray, comps: Sequence[GaussianComponent], kernel: KernelSpec, workers: int = 1):
        n = X.shape[0]
        w = np.full(n, 1.0 / n)
        parts = _map(workers, lambda c: cross_partials(X, c, kernel, w), comps)
        self.J = np.stack([p[0] for p in parts], axis=1)
        self.mean = self.J.mean(axis=0)
        self._g_mean = [p[1] for p in parts]
        self._g_cov = [p[2] for p in parts]

    def gradient(self, coef: np.ndarray):
        return (
            [c * g for c, g in zip(coef, self._g_mean)],
            [c * g for c, g in zip(coef, self._g_cov)],
        )


def component_gradients(comps, pair: PairTerms, W, cross_terms, coefs):
    """Mean and factor gradients of ``sum W_ks I_ks + sum_slices coef . Jbar``."""
    g_mean, g_cov = pair.gradient(W)
    for ct, coef in zip(cross_terms, coefs):
        cm, cc = ct.gradient(coef)
        g_mean = [a + b for a, b in zip(g_mean, cm)]
        g_cov = [a + b for a, b in zip(g_cov, cc)]
    return g_mean, [factor_gradient(c, g) for c, g in zip(comps, g_cov)]


def mmd2_grad(data, mix: MixtureState, kernel: KernelSpec | None = None) -> Gradient:
    """Analytic gradient of ``pi^T I pi - 2 pi^T Jbar``."""
    kernel = _kernel_of(mix, kernel)
    X = _as_rows(data)
    pi = mix.weights
    pair = PairTerms(mix.components, kernel)
    cross = CrossTerms(X, mix.components, kernel)
    g_mean, g_fac = component_gradients(mix.components, pair, np.outer(pi, pi), [cross], [-2.0 * pi])
    weights = 2.0 * pair.values @ pi - 2.0 * cross.mean
    return Gradient(np.stack(g_mean), g_fac, weights)
