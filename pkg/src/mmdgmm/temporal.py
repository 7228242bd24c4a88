"""Time-varying mixtures: shared components, per-slice softmax weights.

The weights at slice ``l`` are ``softmax(z_l)``.  The fitted loss is the
slice average of the static objective plus a squared-difference penalty on
consecutive logits:

    (1/L) sum_l [pi_l^T I pi_l - 2 J_l^T pi_l] + lam * sum_l |z_{l+1} - z_l|^2
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import softmax

from .basis import CoefficientMatrix
from .kernels import DEFAULT_RIDGE, KernelSpec, _as_rows, cross_matrix, gram_matrix
from .mixture import MixtureState, responsibilities
from .objective import CrossTerms, PairTerms, component_gradients
from .optimizer import FitError, _with_ridge, kmeanspp_init
from .qp import solve_simplex_qp

LOGIT_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class TemporalSeries:
    slices: tuple
    times: np.ndarray

    def __post_init__(self):
        slices = tuple(self.slices)
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if len(slices) < 1:
            raise ValueError("a series needs at least one slice")
        if len(slices) != times.size:
            raise ValueError(f"{len(slices)} slices but {times.size} times")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        dims = {_as_rows(s).shape[1] for s in slices}
        if len(dims) != 1:
            raise ValueError(f"slices disagree on dimension: {sorted(dims)}")
        bases = {repr(sorted(s.basis.to_dict().items())) for s in slices if isinstance(s, CoefficientMatrix)}
        if len(bases) > 1:
            raise ValueError("slices must share one basis")
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "times", times)

    @property
    def L(self) -> int:
        return len(self.slices)

    @property
    def M(self) -> int:
        return _as_rows(self.slices[0]).shape[1]


@dataclass(frozen=True, eq=False)
class TemporalMixture:
    components: tuple
    logits: np.ndarray
    kernel: KernelSpec | None = None
    times: np.ndarray | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        z = np.atleast_2d(np.asarray(self.logits, dtype=float))
        if z.shape[1] != len(comps):
            raise ValueError(f"logits have {z.shape[1]} columns for {len(comps)} components")
        if not np.all(np.isfinite(z)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "logits", z)
        if self.times is not None:
            t = np.asarray(self.times, dtype=float).reshape(-1)
            if t.size != z.shape[0]:
                raise ValueError("one time per logit row required")
            object.__setattr__(self, "times", t)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def L(self) -> int:
        return self.logits.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """L x K matrix of slice weights."""
        return softmax(self.logits, axis=1)

    def slice_state(self, l: int) -> MixtureState:
        return MixtureState(self.weights[l], self.components, self.kernel)

    def weights_at(self, t: float) -> np.ndarray:
        """Weights at an arbitrary time: logits interpolated linearly, clamped outside the slice range."""
        if self.times is None:
            raise ValueError("mixture carries no slice times")
        z = np.array([np.interp(t, self.times, self.logits[:, k]) for k in range(self.K)])
        return softmax(z)


@dataclass
class TemporalFitReport:
    mixture: TemporalMixture
    loss_trace: np.ndarray
    wall_time: float
    weight_trace: list = field(default_factory=list, repr=False)


def _penalty(z: np.ndarray, smoothness: float) -> float:
    if z.shape[0] < 2 or smoothness == 0:
        return 0.0
    return smoothness * float(np.sum(np.diff(z, axis=0) ** 2))


def integrated_loss(series: TemporalSeries, mix: TemporalMixture, smoothness: float = 0.0) -> float:
    """Slice-averaged ``pi^T I pi - 2 J^T pi`` plus the logit smoothness penalty."""
    if mix.L != series.L:
        raise ValueError(f"mixture has {mix.L} slices, series has {series.L}")
    I = gram_matrix(mix.components, mix.kernel)
    W = mix.weights
    total = 0.0
    for l, data in enumerate(series.slices):
        J = cross_matrix(data, mix.components, mix.kernel).mean(axis=0)
        total += W[l] @ I @ W[l] - 2.0 * J @ W[l]
    return total / series.L + _penalty(mix.logits, smoothness)


def _smoothing_operator(L: int, step: float, smoothness: float) -> np.ndarray | None:
    """``(I + 2 * step * lam * D^T D)^{-1}``: the exact proximal map of the penalty."""
    if L < 2 or smoothness == 0:
        return None
    D = np.diff(np.eye(L), axis=0)
    return np.linalg.inv(np.eye(L) + 2.0 * step * smoothness * D.T @ D)


def fit_temporal(
    series: TemporalSeries,
    kernel: KernelSpec,
    K: int,
    epochs: int = 400,
    learning_rate: float = 0.05,
    ridge: float = DEFAULT_RIDGE,
    smoothness: float = 0.0,
    seed: int = 0,
    covariance_type: str = "diag",
    workers: int = 1,
    track: bool = False,
) -> TemporalFitReport:
    """Joint gradient steps on logits, means and covariance factors.

    Components start from k-means on the pooled slices; logits start at the
    log of each slice's QP weights under those components.  The smoothness
    penalty is applied through its proximal map, which keeps large ``smoothness``
    values stable at any learning rate.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be > 0")
    if smoothness < 0:
        raise ValueError("smoothness must be >= 0")
    t0 = time.perf_counter()
    slices = [_as_rows(s) for s in series.slices]
    pooled = np.concatenate(slices, axis=0)
    if pooled.shape[0] < K:
        raise ValueError(f"need at least K={K} rows in total, got {pooled.shape[0]}")
    L = series.L
    comps = kmeanspp_init(pooled, K, ridge, seed, covariance_type)

    I0 = gram_matrix(comps, kernel)
    z = np.empty((L, K))
    for l, X in enumerate(slices):
        pi0 = solve_simplex_qp(I0, cross_matrix(X, comps, kernel).mean(axis=0))
        z[l] = np.log(np.clip(pi0, LOGIT_FLOOR, None))
    z -= z.mean(axis=1, keepdims=True)

    prox = _smoothing_operator(L, learning_rate, smoothness)
    losses = np.empty(epochs)
    weight_trace = []
    for epoch in range(epochs):
        pi = softmax(z, axis=1)
        with np.errstate(over="ignore", invalid="ignore"):
            pair = PairTerms(comps, kernel)
            cross = [CrossTerms(X, comps, kernel, workers) for X in slices]
        I = pair.values
        if not (np.all(np.isfinite(I)) and all(np.all(np.isfinite(c.mean)) for c in cross)):
            raise FitError("non-finite kernel expectations", epoch)
        loss = 0.0
        g_z = np.empty_like(z)
        for l in range(L):
            loss += pi[l] @ I @ pi[l] - 2.0 * cross[l].mean @ pi[l]
            g = 2.0 * (I @ pi[l] - cross[l].mean) / L
            g_z[l] = pi[l] * (g - pi[l] @ g)
        loss = loss / L + _penalty(z, smoothness)
        if not math.isfinite(loss):
            raise FitError("non-finite loss", epoch)
        losses[epoch] = loss
        if track:
            weight_trace.append(pi.copy())

        W = pi.T @ pi / L
        g_m, g_f = component_gradients(comps, pair, W, cross, [-2.0 * pi[l] / L for l in range(L)])
        z = z - learning_rate * g_z
        if prox is not None:
            z = prox @ z
        comps = [
            c.with_params(mean=c.mean - learning_rate * gm, factor=c.factor - learning_rate * gf)
            for c, gm, gf in zip(comps, g_m, g_f)
        ]
        if not all(np.all(np.isfinite(c.mean)) and np.all(np.isfinite(c.factor)) for c in comps):
            raise FitError("non-finite parameters after gradient step", epoch)

    mix = TemporalMixture(_with_ridge(comps, ridge), z, kernel, series.times)
    return TemporalFitReport(mix, losses, time.perf_counter() - t0, weight_trace)


def group_posteriors(series: TemporalSeries, mix: TemporalMixture, membership: Sequence, ridge: float = DEFAULT_RIDGE):
    """Per-group, per-slice mean responsibilities.

    ``membership[l]`` labels the rows of slice ``l``.  Returns a dict mapping
    each group label to an L x K array; a slice where the group has no rows
    is a row of NaN (the gap marker).
    """
    if len(membership) != series.L:
        raise ValueError(f"membership covers {len(membership)} slices, series has {series.L}")
    labels = [np.asarray(m).reshape(-1) for m in membership]
    for l, (lab, data) in enumerate(zip(labels, series.slices)):
        if lab.size != _as_rows(data).shape[0]:
            raise ValueError(f"slice {l}: {lab.size} labels for {_as_rows(data).shape[0]} rows")
    groups = sorted(set(np.concatenate(labels).tolist()))
    out = {g: np.full((series.L, mix.K), np.nan) for g in groups}
    for l, data in enumerate(series.slices):
        gamma = responsibilities(data, mix.slice_state(l), ridge)
        for g in groups:
            rows = labels[l] == g
            if np.any(rows):
                out[g][l] = gamma[rows].mean(axis=0)
    return out


def group_tv(posteriors_a, posteriors_b, tol: float = 1e-6) -> np.ndarray:
    """``0.5 * |a_l - b_l|_1`` per slice; NaN where either side has a gap."""
    a = np.atleast_2d(np.asarray(posteriors_a, dtype=float))
    b = np.atleast_2d(np.asarray(posteriors_b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    for name, P in (("first", a), ("second", b)):
        ok = ~np.any(np.isnan(P), axis=1)
        Q = P[ok]
        if np.any(Q < -tol) or np.any(np.abs(Q.sum(axis=1) - 1.0) > tol):
            raise ValueError(f"{name} input has rows off the simplex")
    return 0.5 * np.sum(np.abs(a - b), axis=1)


def temporal_elbow_scan(series: TemporalSeries, kernel: KernelSpec, K_grid, **fit_kwargs):
    """Final integrated loss per K; picking the elbow is left to the caller."""
    return [(int(K), float(fit_temporal(series, kernel, int(K), **fit_kwargs).loss_trace[-1])) for K in K_grid]
