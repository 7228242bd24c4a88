"""File formats: coefficient/label CSVs, model JSON, traces and flat configs.

CSV files are comma separated with LF line endings.  Every float is written
with 17 significant digits, so models and data round-trip bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .basis import BasisSpec, CoefficientMatrix
from .kernels import GaussianComponent, KernelSpec
from .mixture import MixtureState

MODEL_VERSION = 1


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class ConfigError(ValueError):
    """Bad configuration key or value."""


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _write_text(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _rows_text(header, rows) -> str:
    lines = [",".join(header)] if header else []
    lines += [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


def _read_rows(path):
    """Non-empty, non-comment rows with their 1-based line numbers."""
    with open(path, encoding="utf-8", newline="") as fh:
        out = []
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()) or row[0].lstrip().startswith("#"):
                continue
            out.append((lineno, [c.strip() for c in row]))
    return out


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# coefficients and labels


def write_coefficients(path, data):
    X = data.data if isinstance(data, CoefficientMatrix) else np.asarray(data, dtype=float)
    header = [f"c{j + 1}" for j in range(X.shape[1])]
    _write_text(path, _rows_text(header, ([fmt(v) for v in row] for row in X)))


def read_coefficients(path, basis: BasisSpec | None = None) -> CoefficientMatrix:
    """n x M matrix; an optional non-numeric first row is taken as a header."""
    rows = _read_rows(path)
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    X = np.empty((len(rows), width))
    for i, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DataError(f"{path}: row {lineno} is not numeric") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}: row {lineno} contains a non-finite value")
        X[i] = vals
    if basis is not None and basis.M != width:
        raise DataError(f"{path}: data has M={width} but the basis has M={basis.M}")
    return CoefficientMatrix(X, basis or BasisSpec("canonical", d=width))


def write_labels(path, labels):
    _write_text(path, _rows_text(["label"], ([str(int(v))] for v in np.asarray(labels).reshape(-1))))


def read_labels(path) -> np.ndarray:
    rows = _read_rows(path)
    if rows and not _is_number(rows[0][1][0]):
        rows = rows[1:]
    out = []
    for lineno, row in rows:
        try:
            out.append(int(row[0]))
        except ValueError:
            raise DataError(f"{path}: row {lineno} is not an integer label") from None
    return np.asarray(out, dtype=int)


# ---------------------------------------------------------------------------
# model JSON


def _dumps(obj, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(_dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(obj if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise ValueError("non-finite float in JSON output")
        return fmt(obj)
    return json.dumps(obj)


def write_json(path, obj):
    _write_text(path, _dumps(obj) + "\n")


def kernel_to_dict(kernel: KernelSpec) -> dict:
    if kernel.variant == "gaussian":
        return {"variant": "gaussian", "sigma": kernel.sigma}
    return {"variant": "polynomial", "degree": kernel.degree, "c": kernel.c}


def kernel_from_dict(d: dict) -> KernelSpec:
    if d.get("variant") == "gaussian":
        return KernelSpec.gaussian(float(d["sigma"]))
    if d.get("variant") == "polynomial":
        return KernelSpec.polynomial(int(d["degree"]), float(d["c"]))
    raise DataError(f"unknown kernel variant {d.get('variant')!r}")


def _components_dict(comps) -> dict:
    types = {c.cov_type for c in comps}
    ridges = {c.ridge for c in comps}
    if len(types) != 1 or len(ridges) != 1:
        raise ValueError("components must share covariance type and ridge to be serialised")
    return {
        "means": [c.mean for c in comps],
        "cov": {
            "type": types.pop(),
            # K = L L^T + ridge I (full) or diag(s^2) + ridge I (diag)
            "parameterization": "factor",
            "values": [c.factor for c in comps],
            "ridge": ridges.pop(),
        },
    }


def model_to_dict(mix) -> dict:
    """Serialisable form of a ``MixtureState`` or ``TemporalMixture``."""
    from .temporal import TemporalMixture

    out = {"version": MODEL_VERSION}
    if mix.kernel is not None:
        out["kernel"] = kernel_to_dict(mix.kernel)
    comps = mix.components
    out["K"] = len(comps)
    out["M"] = comps[0].dim
    if isinstance(mix, TemporalMixture):
        out["weights"] = mix.weights
        out["logits"] = mix.logits
        if mix.times is not None:
            out["times"] = mix.times
    else:
        out["weights"] = mix.weights
    out.update(_components_dict(comps))
    return out


def model_from_dict(d: dict):
    from .temporal import TemporalMixture

    try:
        K, M = int(d["K"]), int(d["M"])
        cov = d["cov"]
        kernel = kernel_from_dict(d["kernel"]) if "kernel" in d else None
        comps = [
            GaussianComponent(np.asarray(m, float), np.asarray(f, float), cov["type"], float(cov.get("ridge", 0.0)))
            for m, f in zip(d["means"], cov["values"])
        ]
        if len(comps) != K or any(c.dim != M for c in comps):
            raise DataError(f"model declares K={K}, M={M} but stores {len(comps)} components")
        if "logits" in d:
            return TemporalMixture(comps, np.asarray(d["logits"], float), kernel, d.get("times"))
        return MixtureState(np.asarray(d["weights"], float), comps, kernel)
    except (KeyError, TypeError) as exc:
        raise DataError(f"model JSON is missing or has a malformed field: {exc}") from None


def write_model(path, mix):
    write_json(path, model_to_dict(mix))


def read_model(path):
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(d)


# ---------------------------------------------------------------------------
# traces and temporal outputs


def write_fit_trace(path, losses, kkts):
    _write_text(path, _rows_text(["epoch", "loss", "qp_kkt"], ([str(i), fmt(a), fmt(b)] for i, (a, b) in enumerate(zip(losses, kkts)))))


def write_loss_trace(path, losses):
    _write_text(path, _rows_text(["epoch", "loss"], ([str(i), fmt(v)] for i, v in enumerate(losses))))


def write_em_trace(path, logliks):
    _write_text(path, _rows_text(["iteration", "loglik"], ([str(i), fmt(v)] for i, v in enumerate(logliks))))


def write_weights(path, times, weights):
    W = np.atleast_2d(weights)
    header = ["time"] + [f"pi_{k + 1}" for k in range(W.shape[1])]
    _write_text(path, _rows_text(header, ([fmt(t)] + [fmt(v) for v in row] for t, row in zip(times, W))))


def write_tv(path, times, tv):
    _write_text(path, _rows_text(["time", "tv"], ([fmt(t), fmt(v)] for t, v in zip(times, tv))))


def write_index(path, times, paths):
    _write_text(path, _rows_text(["slice", "time", "path"], ([str(l), fmt(t), str(p)] for l, (t, p) in enumerate(zip(times, paths)))))


def read_index(path):
    """``[(slice, time, absolute path)]`` sorted by time; relative paths resolve against the index directory."""
    base = Path(path).parent
    out = []
    for lineno, row in _read_rows(path):
        if row[0] == "slice":
            continue
        if len(row) != 3:
            raise DataError(f"{path}: row {lineno} needs slice,time,path")
        try:
            sl, t = int(row[0]), float(row[1])
        except ValueError:
            raise DataError(f"{path}: row {lineno} has a bad slice id or time") from None
        p = Path(row[2])
        out.append((sl, t, p if p.is_absolute() else base / p))
    if not out:
        raise DataError(f"{path}: empty index")
    return sorted(out, key=lambda r: r[1])


def write_groups(path, membership):
    rows = ([str(l), str(i), str(g)] for l, labs in enumerate(membership) for i, g in enumerate(labs))
    _write_text(path, _rows_text(["slice", "row", "group"], rows))


def read_groups(path, slice_ids, sizes):
    """Per-slice group labels from a "slice,row,group" file; every row must be covered."""
    pos = {s: l for l, s in enumerate(slice_ids)}
    out = [np.full(n, None, dtype=object) for n in sizes]
    for lineno, row in _read_rows(path):
        if row[0] == "slice":
            continue
        try:
            l, i = pos[int(row[0])], int(row[1])
            out[l][i] = row[2]
        except (KeyError, ValueError, IndexError):
            raise DataError(f"{path}: row {lineno} refers to an unknown slice or row") from None
    for l, labs in enumerate(out):
        missing = np.flatnonzero(labs == None)  # noqa: E711
        if missing.size:
            raise DataError(f"{path}: slice {slice_ids[l]} row {missing[0]} has no group")
    return out


# ---------------------------------------------------------------------------
# flat key = value config

CONFIG_DEFAULTS = {
    "kernel.type": "gaussian",
    "kernel.sigma": None,  # None: median heuristic times kernel.sigma_factor
    "kernel.sigma_factor": 1.0,
    "kernel.degree": 2,
    "kernel.c": 1.0,
    "K": 3,
    "epochs": 400,
    "lr": 0.05,
    "lr_final": None,  # None: constant rate; otherwise cosine annealing down to this value
    "ridge": 1e-6,
    "covariance": "diag",
    "seed": 0,
    "workers": 1,
    "optimizer": "gd",
    "basis.type": "canonical",
    "basis.R": None,  # None: accept any data dimension
    "basis.alpha": 0.1,
    "temporal.smoothness": 0.0,
    "qp.tol": 1e-10,
    "em.iterations": 200,
    "em.init": "identity",
}

_CHOICES = {
    "kernel.type": ("gaussian", "polynomial"),
    "covariance": ("diag", "full"),
    "optimizer": ("gd", "adam"),
    "basis.type": ("canonical", "cosine_l2", "cosine_tensor2d", "cosine_h1", "graph_laplacian", "sym_vech"),
    "em.init": ("identity", "within_cluster"),
}
_INTS = {"kernel.degree", "K", "epochs", "seed", "workers", "basis.R", "em.iterations"}
_FLOATS = {"kernel.sigma", "kernel.sigma_factor", "kernel.c", "lr", "lr_final", "ridge", "basis.alpha", "temporal.smoothness", "qp.tol"}
_NULLABLE = {k for k, v in CONFIG_DEFAULTS.items() if v is None}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if not value and key in _NULLABLE:
            cfg[key] = None
            continue
        try:
            if key in _INTS:
                cfg[key] = int(value)
            elif key in _FLOATS:
                cfg[key] = float(value)
            else:
                cfg[key] = value
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for '{key}': {value!r}") from None
        if key in _CHOICES and cfg[key] not in _CHOICES[key]:
            raise ConfigError(f"{source}:{lineno}: '{key}' must be one of {', '.join(_CHOICES[key])}")
    return cfg


def read_config(path) -> dict:
    if path is None:
        return dict(CONFIG_DEFAULTS)
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), os.fspath(path))


def expected_dimension(cfg: dict) -> int | None:
    """Coefficient dimension implied by ``basis.type`` and ``basis.R``."""
    R = cfg["basis.R"]
    if R is None:
        return None
    kind = cfg["basis.type"]
    if kind == "cosine_tensor2d":
        return R * R
    if kind == "sym_vech":
        return R * (R + 1) // 2
    return R
