"""Projected EM baseline: maximum likelihood for a Gaussian mixture on the coefficient vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .kernels import GaussianComponent, _as_rows
from .mixture import MixtureState, log_densities, mixture_loglik
from .optimizer import kmeans, kmeanspp_init

COLLAPSE_FRACTION = 1e-12


@dataclass
class EmConfig:
    K: int = 3
    iterations: int = 200
    ridge: float = 1e-6
    seed: int = 0
    covariance_type: str = "diag"
    init: str = "identity"
    fixed_covariance: bool = False
    initial_components: list | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.covariance_type not in ("diag", "full"):
            raise ValueError(f"covariance_type must be 'diag' or 'full', not {self.covariance_type!r}")
        if self.init not in ("identity", "within_cluster", "provided"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "provided" and not self.initial_components:
            raise ValueError("init='provided' needs initial_components")


@dataclass
class EmResult:
    final_state: MixtureState
    loglik_trace: np.ndarray
    collapse_events: list = field(default_factory=list)  # (iteration, component)


def projected_loglik(data, mix: MixtureState) -> float:
    """``sum_i log sum_k pi_k N(x_i; m_k, K_k)`` with the stored covariances."""
    return mixture_loglik(data, mix, ridge=0.0)


def _initial_components(X, cfg: EmConfig):
    if cfg.init == "provided":
        comps = list(cfg.initial_components)
        if len(comps) != cfg.K or any(c.dim != X.shape[1] for c in comps):
            raise ValueError("initial_components do not match K or the data dimension")
        return comps
    if cfg.init == "within_cluster":
        return kmeanspp_init(X, cfg.K, cfg.ridge, cfg.seed, cfg.covariance_type)
    centers, _ = kmeans(X, cfg.K, cfg.seed)
    M = X.shape[1]
    return [GaussianComponent.from_covariance(c, np.eye(M), cfg.covariance_type) for c in centers]


def _m_step(X, gamma, Nk, comps, cfg: EmConfig):
    M = X.shape[1]
    out = []
    for k, comp in enumerate(comps):
        mean = gamma[:, k] @ X / Nk[k]
        if cfg.fixed_covariance:
            out.append(comp.with_params(mean=mean))
            continue
        R = X - mean
        if cfg.covariance_type == "diag":
            var = gamma[:, k] @ (R * R) / Nk[k]
            out.append(GaussianComponent(mean, np.sqrt(var), "diag", cfg.ridge))
        else:
            S = (R * gamma[:, [k]]).T @ R / Nk[k]
            out.append(GaussianComponent.from_covariance(mean, S + cfg.ridge * np.eye(M), "full", cfg.ridge))
    return out


def em_fit(data, cfg: EmConfig) -> EmResult:
    """Alternate E-steps (log-sum-exp responsibilities) and closed-form M-steps.

    The trace holds the log-likelihood after each M-step.  A component whose
    effective count drops below ``1e-12 * n`` is restarted at the point that
    is worst explained (lowest maximum responsibility, ties broken by the
    lowest mixture density) and logged.
    """
    X = _as_rows(data)
    n = X.shape[0]
    if n <= cfg.K:
        raise ValueError(f"need n > K (n={n}, K={cfg.K})")
    comps = _initial_components(X, cfg)
    weights = np.full(cfg.K, 1.0 / cfg.K)
    trace = np.empty(cfg.iterations)
    events = []
    for it in range(cfg.iterations):
        mix = MixtureState(weights, comps)
        joint = log_densities(X, mix, ridge=0.0) + np.log(weights)
        log_px = logsumexp(joint, axis=1, keepdims=True)
        gamma = np.exp(joint - log_px)
        Nk = gamma.sum(axis=0)
        dead = Nk < COLLAPSE_FRACTION * n
        safe = np.where(dead, 1.0, Nk)
        new = _m_step(X, gamma, safe, comps, cfg)
        if np.any(dead):
            # lowest maximum responsibility; ties (e.g. one surviving component) go to the lowest density
            worst = int(np.lexsort((log_px[:, 0], gamma.max(axis=1)))[0])
            for k in np.flatnonzero(dead):
                # keep the old covariance, move the mean, give it one point's worth of weight
                new[k] = comps[k].with_params(mean=X[worst])
                Nk[k] = 1.0
                events.append((it, int(k)))
        weights = Nk / Nk.sum()
        comps = new
        trace[it] = projected_loglik(X, MixtureState(weights, comps))
    return EmResult(MixtureState(weights, comps), trace, events)
