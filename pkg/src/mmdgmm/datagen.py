"""Seeded synthetic fixtures with known ground truth.

Scenarios
    gmm_1d         three 1-D Gaussians
    functional_l2  d-channel curves in a cosine basis, K diagonal-covariance clusters
    tensor_2d      surfaces in an R_s x R_t cosine tensor basis
    graph_signals  signals on an Erdos-Renyi graph, Laplacian eigenbasis coordinates
    temporal_flip  two time slices with shared components and swapped weights

Function and graph scenarios draw coefficients directly in the orthonormal
basis.  Their cluster profiles (mean and per-coordinate scale) come from a
fixed ``profile_seed`` so that data seeds change the sample but not the truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, WeightedGraph, laplacian_eigenbasis
from .kernels import GaussianComponent, KernelSpec
from .mixture import MixtureState, make_rng, sample

SCENARIOS = ("gmm_1d", "functional_l2", "tensor_2d", "graph_signals", "temporal_flip")

DEFAULTS = {
    "gmm_1d": {
        "n": 1500,
        "means": (-3.0, 0.5, 4.0),
        "stds": (0.6, 0.9, 0.5),
        "weights": (0.5, 0.3, 0.2),
    },
    "functional_l2": {
        "n": 500,
        "weights": (0.30, 0.25, 0.20, 0.15, 0.10),
        "R": 15,
        "d": 2,
        "profile_seed": 0,
    },
    "tensor_2d": {
        "n": 400,
        "weights": (0.45, 0.35, 0.20),
        "R": (8, 8),
        "profile_seed": 0,
    },
    "graph_signals": {
        "n": 150,
        "nodes": 30,
        "edge_prob": 0.25,
        "M": 15,
        "alpha": 0.1,
        "K": 3,
        "profile_seed": 0,
    },
    "temporal_flip": {
        "n": 500,
        "means": (-2.0, 2.0),
        "std": 0.3,
        "weights_start": (0.9, 0.1),
        "weights_end": (0.1, 0.9),
        "times": (0.0, 1.0),
    },
}


@dataclass
class SyntheticSpec:
    scenario: str
    n: int | None = None
    seed: int = 0
    scale: float = 1.0  # multiplies every component standard deviation
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        unknown = set(self.params) - set(DEFAULTS[self.scenario]) - {"n"}
        if unknown:
            raise ValueError(f"unknown parameters for {self.scenario}: {', '.join(sorted(unknown))}")
        if self.n is not None and self.n < 1:
            raise ValueError("n must be >= 1")
        if self.scale < 0:
            raise ValueError("scale must be >= 0")

    def resolved(self) -> dict:
        out = dict(DEFAULTS[self.scenario])
        out.update(self.params)
        if self.n is not None:
            out["n"] = int(self.n)
        return out


@dataclass
class Synthetic:
    data: object  # CoefficientMatrix, or TemporalSeries for temporal_flip
    labels: object  # array, or one array per slice
    truth: object  # MixtureState, or TemporalMixture
    extra: dict = field(default_factory=dict)


def _weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must be a probability vector, got {w.tolist()}")
    return w


def _diag_mixture(weights, means, stds) -> MixtureState:
    comps = [GaussianComponent(m, s, "diag", 0.0) for m, s in zip(means, stds)]
    return MixtureState(weights, comps)


def _decaying_profiles(rng, K: int, decay: np.ndarray):
    """K mean vectors and scale vectors whose size falls off with ``decay``."""
    means = 2.0 * rng.standard_normal((K, decay.size)) * decay
    scales = rng.uniform(0.2, 0.5, size=(K, 1)) * decay
    return means, scales


def _gmm_1d(p, scale):
    means, stds = np.asarray(p["means"], float), np.asarray(p["stds"], float)
    w = _weights(p["weights"])
    if not (means.size == stds.size == w.size):
        raise ValueError("means, stds and weights must have equal length")
    if np.any(stds < 0):
        raise ValueError("stds must be >= 0")
    return _diag_mixture(w, means[:, None], scale * stds[:, None]), BasisSpec("canonical", d=1), {}


def _functional(p, scale):
    w = _weights(p["weights"])
    R, d = int(p["R"]), int(p["d"])
    if R < 1 or d < 1:
        raise ValueError("R and d must be >= 1")
    decay = np.tile(1.0 / np.arange(1, R + 1), d)
    means, scales = _decaying_profiles(make_rng(p["profile_seed"]), w.size, decay)
    return _diag_mixture(w, means, scale * scales), BasisSpec("cosine_l2", R=R, channels=d), {}


def _tensor(p, scale):
    w = _weights(p["weights"])
    Rs, Rt = (int(r) for r in np.broadcast_to(p["R"], (2,)))
    r = np.arange(1, Rs + 1)[:, None] + np.arange(Rt)[None, :]
    decay = (1.0 / r).reshape(-1)
    means, scales = _decaying_profiles(make_rng(p["profile_seed"]), w.size, decay)
    return _diag_mixture(w, means, scale * scales), BasisSpec("cosine_tensor2d", R=(Rs, Rt)), {}


def erdos_renyi(nodes: int, edge_prob: float, seed: int) -> WeightedGraph:
    """One coin per unordered pair; disconnected draws are kept."""
    if nodes < 2:
        raise ValueError("need at least two nodes")
    if not 0 <= edge_prob <= 1:
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = make_rng(seed)
    iu, ju = np.triu_indices(nodes, k=1)
    keep = rng.random(iu.size) < edge_prob
    return WeightedGraph(nodes, [(int(i), int(j), 1.0) for i, j in zip(iu[keep], ju[keep])])


def _graph(p, scale):
    K, M = int(p["K"]), int(p["M"])
    if M > int(p["nodes"]):
        raise ValueError("M cannot exceed the number of nodes")
    g = erdos_renyi(int(p["nodes"]), float(p["edge_prob"]), p["profile_seed"])
    basis = laplacian_eigenbasis(g, float(p["alpha"]), M)
    # low-frequency coordinates carry more energy
    decay = 1.0 / np.sqrt(basis.eigenvalues + float(p["alpha"]))
    decay = decay / decay.max()
    means, scales = _decaying_profiles(make_rng(p["profile_seed"] + 1), K, decay)
    return _diag_mixture(np.full(K, 1.0 / K), means, scale * scales), basis, {"graph": g}


def _reference_kernel(X, seed):
    """Median-heuristic Gaussian kernel attached to truth models so they can be scored by MMD."""
    from .metrics import median_bandwidth

    try:
        return KernelSpec.gaussian(median_bandwidth(X, 1.0, seed))
    except ValueError:
        return None  # all samples coincide


_BUILDERS = {"gmm_1d": _gmm_1d, "functional_l2": _functional, "tensor_2d": _tensor, "graph_signals": _graph}


def truth_of(spec: SyntheticSpec):
    """Ground-truth mixture and basis of a static scenario."""
    p = spec.resolved()
    return _BUILDERS[spec.scenario](p, spec.scale)


def _temporal(spec: SyntheticSpec, p) -> Synthetic:
    from .temporal import TemporalMixture, TemporalSeries

    means = np.asarray(p["means"], dtype=float)
    w0, w1 = _weights(p["weights_start"]), _weights(p["weights_end"])
    if not (means.size == w0.size == w1.size):
        raise ValueError("means and weights must have equal length")
    if p["std"] < 0:
        raise ValueError("std must be >= 0")
    comps = [GaussianComponent([m], [spec.scale * p["std"]], "diag", 0.0) for m in means]
    basis = BasisSpec("canonical", d=1)
    slices, labels = [], []
    for l, w in enumerate((w0, w1)):
        # one independent stream per slice
        X, lab = sample(MixtureState(w, comps), p["n"], spec.seed * 2 + l, basis)
        slices.append(X)
        labels.append(lab)
    with np.errstate(divide="ignore"):
        logits = np.log(np.stack([w0, w1]))
    logits = np.where(np.isfinite(logits), logits, -745.0)
    pooled = np.concatenate([X.data for X in slices])
    truth = TemporalMixture(comps, logits, _reference_kernel(pooled, spec.seed), p["times"])
    return Synthetic(TemporalSeries(slices, p["times"]), labels, truth)


def generate(spec: SyntheticSpec) -> Synthetic:
    """Sample a scenario; identical specs give bit-identical output."""
    p = spec.resolved()
    if spec.scenario == "temporal_flip":
        return _temporal(spec, p)
    truth, basis, extra = _BUILDERS[spec.scenario](p, spec.scale)
    X, labels = sample(truth, p["n"], spec.seed, basis)
    return Synthetic(X, labels, truth.replace(kernel=_reference_kernel(X, spec.seed)), extra)
