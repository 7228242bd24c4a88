"""Alternating MMD fit: exact simplex QP for the weights, gradient steps for the components."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .kernels import DEFAULT_RIDGE, GaussianComponent, KernelSpec, _as_rows
from .mixture import MixtureState, make_rng
from .objective import CrossTerms, PairTerms, component_gradients
from .qp import kkt_residual, qp_objective, solve_simplex_qp


class FitError(RuntimeError):
    """Raised when the loss becomes non-finite; ``epoch`` names the failing epoch."""

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


@dataclass
class FitConfig:
    K: int = 3
    epochs: int = 400
    learning_rate: float = 0.05
    ridge: float = DEFAULT_RIDGE
    covariance_type: str = "diag"
    qp_tol: float = 1e-10
    seed: int = 0
    lr_schedule: str = "constant"
    final_lr: float = 1e-4
    init: str = "kmeanspp"
    initial_components: list | None = None
    workers: int = 1
    optimizer: str = "gd"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.covariance_type not in ("diag", "full"):
            raise ValueError(f"covariance_type must be 'diag' or 'full', not {self.covariance_type!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.init not in ("kmeanspp", "provided"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "provided" and not self.initial_components:
            raise ValueError("init='provided' needs initial_components")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "constant" or self.epochs <= 1:
            return self.learning_rate
        frac = epoch / (self.epochs - 1)
        return self.final_lr + 0.5 * (self.learning_rate - self.final_lr) * (1.0 + math.cos(math.pi * frac))


@dataclass
class FitReport:
    final_state: MixtureState
    loss_trace: np.ndarray
    qp_kkt_residuals: np.ndarray
    wall_time: float
    weight_trace: list = field(default_factory=list, repr=False)
    min_cov_eig_trace: list = field(default_factory=list, repr=False)


# ---------------------------------------------------------------------------
# initialisation


def _canonical_order(X: np.ndarray, seed: int) -> np.ndarray:
    """Row permutation that depends only on the multiset of rows and the seed."""
    order = np.lexsort(X.T[::-1])
    return order[make_rng(seed).permutation(X.shape[0])]


def kmeans(X: np.ndarray, K: int, seed: int, max_iter: int = 100):
    """k-means++ seeding followed by Lloyd iterations.

    Returns ``(centers, labels)`` with labels indexing the rows of ``X``.
    Distance ties go to the lowest center index; an empty cluster keeps its center.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < K:
        raise ValueError(f"need at least K={K} rows, got {n}")
    order = _canonical_order(X, seed)
    Y = X[order]
    rng = make_rng(seed + 1)
    centers = np.empty((K, X.shape[1]))
    centers[0] = Y[rng.integers(n)]
    d2 = np.sum((Y - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[k] = Y[idx]
        d2 = np.minimum(d2, np.sum((Y - centers[k]) ** 2, axis=1))

    labels = None
    for _ in range(max_iter):
        D = np.sum((Y[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(D, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in range(K):
            members = Y[labels == k]
            if len(members):
                centers[k] = members.mean(axis=0)
    out = np.empty(n, dtype=int)
    out[order] = labels
    return centers, out


def kmeanspp_init(data, K: int, ridge: float, seed: int, covariance_type: str = "diag") -> list[GaussianComponent]:
    """Components from k-means: cluster means and within-cluster covariances plus ``ridge * I``."""
    X = _as_rows(data)
    centers, labels = kmeans(X, K, seed)
    M = X.shape[1]
    comps = []
    for k in range(K):
        members = X[labels == k]
        if len(members) > 1:
            S = np.cov(members, rowvar=False, ddof=1).reshape(M, M)
        else:
            S = np.zeros((M, M))
        if covariance_type == "diag":
            comps.append(GaussianComponent(centers[k], np.sqrt(np.clip(np.diag(S), 0.0, None)), "diag", ridge))
        else:
            comps.append(GaussianComponent.from_covariance(centers[k], S + ridge * np.eye(M), "full", ridge))
    return comps


# ---------------------------------------------------------------------------
# fitting


class _Adam:
    def __init__(self, lr_b1=0.9, b2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = lr_b1, b2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, grads: list[np.ndarray], lr: float) -> list[np.ndarray]:
        if self.m is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        out = []
        for i, g in enumerate(grads):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mh = self.m[i] / (1 - self.b1**self.t)
            vh = self.v[i] / (1 - self.b2**self.t)
            out.append(lr * mh / (np.sqrt(vh) + self.eps))
        return out


def _with_ridge(comps, ridge):
    return [GaussianComponent(c.mean, c.factor, c.cov_type, ridge) for c in comps]


def min_cov_eigenvalue(comps) -> float:
    vals = []
    for c in comps:
        vals.append(float(np.min(c.variances())) if c.cov_type == "diag" else float(np.linalg.eigvalsh(c.covariance())[0]))
    return min(vals)


def fit(data, kernel: KernelSpec, cfg: FitConfig, track: bool = False) -> FitReport:
    """Alternate exact QP weight updates with gradient steps on means and covariance factors.

    With ``track=True`` the report also keeps per-epoch weights and the
    smallest covariance eigenvalue.
    """
    t0 = time.perf_counter()
    X = _as_rows(data)
    n, M = X.shape
    if n < cfg.K:
        raise ValueError(f"need n >= K (n={n}, K={cfg.K})")
    if cfg.init == "provided":
        comps = list(cfg.initial_components)
        if len(comps) != cfg.K or any(c.dim != M for c in comps):
            raise ValueError("initial_components do not match K or the data dimension")
    else:
        comps = kmeanspp_init(X, cfg.K, cfg.ridge, cfg.seed, cfg.covariance_type)
    pi = np.full(cfg.K, 1.0 / cfg.K)
    adam = _Adam() if cfg.optimizer == "adam" else None

    losses = np.empty(cfg.epochs)
    kkts = np.empty(cfg.epochs)
    weight_trace, eig_trace = [], []
    K = cfg.K
    for epoch in range(cfg.epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            pair = PairTerms(comps, kernel)
            cross = CrossTerms(X, comps, kernel, cfg.workers)
        I, J = pair.values, cross.mean
        if not (np.all(np.isfinite(I)) and np.all(np.isfinite(J))):
            raise FitError("non-finite kernel expectations", epoch)
        pi = solve_simplex_qp(I, J, cfg.qp_tol)
        loss = qp_objective(I, J, pi)
        if not np.isfinite(loss):
            raise FitError("non-finite loss", epoch)
        losses[epoch] = loss
        kkts[epoch] = kkt_residual(I, J, pi)
        if track:
            weight_trace.append(pi.copy())
            eig_trace.append(min_cov_eigenvalue(comps))

        grads_m, grads_f = component_gradients(comps, pair, np.outer(pi, pi), [cross], [-2.0 * pi])
        lr = cfg.lr_at(epoch)
        if adam is None:
            steps = [lr * g for g in grads_m + grads_f]
        else:
            steps = adam.step(grads_m + grads_f, lr)
        new = []
        for k, c in enumerate(comps):
            mean = c.mean - steps[k]
            factor = c.factor - steps[K + k]
            if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(factor))):
                raise FitError("non-finite parameters after gradient step", epoch)
            new.append(c.with_params(mean=mean, factor=factor))
        comps = new

    state = MixtureState(pi, _with_ridge(comps, cfg.ridge), kernel)
    return FitReport(state, losses, kkts, time.perf_counter() - t0, weight_trace, eig_trace)
