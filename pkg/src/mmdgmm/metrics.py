"""Clustering agreement, kernel bandwidth selection and component matching."""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist, pdist

from .kernels import KernelSpec, _as_rows
from .mixture import MixtureState, make_rng

BANDWIDTH_SUBSAMPLE = 2000


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Adjusted Rand index under the permutation model (Hubert & Arabie)."""
    a = np.asarray(labels_a).reshape(-1)
    b = np.asarray(labels_b).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length ({a.size} vs {b.size})")
    if a.size < 2:
        raise ValueError("ARI needs at least two samples")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(x * (x - 1) / 2))

    index = pairs(table)
    rows = pairs(table.sum(axis=1))
    cols = pairs(table.sum(axis=0))
    total = a.size * (a.size - 1) / 2
    expected = rows * cols / total
    max_index = 0.5 * (rows + cols)
    if max_index == expected:
        # both partitions trivial (all-in-one or all singletons)
        return 1.0
    return (index - expected) / (max_index - expected)


def median_bandwidth(data, factor: float = 1.0, seed: int = 0) -> float:
    """``factor`` times the median pairwise Euclidean distance.

    Above ``BANDWIDTH_SUBSAMPLE`` rows a seeded subsample of that size is used.
    """
    if not factor > 0:
        raise ValueError("factor must be positive")
    X = _as_rows(data)
    if X.shape[0] < 2:
        raise ValueError("median bandwidth needs at least two points")
    if X.shape[0] > BANDWIDTH_SUBSAMPLE:
        idx = np.sort(make_rng(seed).choice(X.shape[0], BANDWIDTH_SUBSAMPLE, replace=False))
        X = X[idx]
    med = float(np.median(pdist(X)))
    if med == 0.0:
        raise ValueError("all points coincide (median distance 0); set the bandwidth explicitly")
    return factor * med


def match_components(est_means, true_means) -> np.ndarray:
    """``perm`` minimising ``sum_k |est[perm[k]] - true[k]|``."""
    cost = cdist(np.asarray(true_means, dtype=float), np.asarray(est_means, dtype=float))
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm


def recovery_errors(est: MixtureState, truth: MixtureState) -> tuple[float, float]:
    """Max weight error and max mean distance after optimal matching."""
    perm = match_components(est.means, truth.means)
    w_err = float(np.max(np.abs(est.weights[perm] - truth.weights)))
    m_err = float(np.max(np.linalg.norm(est.means[perm] - truth.means, axis=1)))
    return w_err, m_err


def elbow_scan(data, kernel: KernelSpec, K_grid: Iterable[int], cfg) -> list[tuple[int, float]]:
    """Final fitted loss for each K (shared seed); the elbow choice is left to the caller."""
    from .optimizer import fit

    rows = []
    for K in K_grid:
        report = fit(data, kernel, replace(cfg, K=int(K)))
        rows.append((int(K), float(report.loss_trace[-1])))
    return rows
