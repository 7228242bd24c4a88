"""Command line: ``mmdgmm {gen,fit,eval,temporal}``.

Exit codes: 0 success, 1 usage or config error, 2 I/O error, 3 data or shape error.
"""

from __future__ import annotations

import argparse
import ast
import sys
from pathlib import Path

import numpy as np

from . import io
from .datagen import DEFAULTS, SCENARIOS, SyntheticSpec, generate
from .em import EmConfig, em_fit
from .io import ConfigError, DataError
from .kernels import KernelSpec
from .metrics import adjusted_rand_index, median_bandwidth
from .mixture import hard_labels, responsibilities
from .objective import mmd2
from .optimizer import FitConfig, fit
from .temporal import TemporalSeries, fit_temporal, group_posteriors, group_tv

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not key=value")
    key, value = (s.strip() for s in item.split("=", 1))
    try:
        parsed = ast.literal_eval(value)
    except (ValueError, SyntaxError):
        parsed = value
    return key, parsed


def _kernel(cfg: dict, data) -> KernelSpec:
    if cfg["kernel.type"] == "polynomial":
        return KernelSpec.polynomial(cfg["kernel.degree"], cfg["kernel.c"])
    sigma = cfg["kernel.sigma"]
    if sigma is None:
        sigma = median_bandwidth(data, cfg["kernel.sigma_factor"], cfg["seed"])
    return KernelSpec.gaussian(sigma)


def _check_dimension(cfg, M, what):
    want = io.expected_dimension(cfg)
    if want is not None and want != M:
        raise DataError(
            f"{what} has M={M} but the config (basis.type={cfg['basis.type']}, basis.R={cfg['basis.R']}) implies M={want}"
        )


def cmd_gen(args) -> int:
    overrides = dict(_parse_override(s) for s in args.set or [])
    params = {k: v for k, v in overrides.items() if k not in ("scale",)}
    unknown = set(params) - set(DEFAULTS[args.scenario])
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}' for scenario {args.scenario}")
    try:
        spec = SyntheticSpec(args.scenario, args.n, args.seed, float(overrides.get("scale", 1.0)), params)
        syn = generate(spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {args.scenario} parameters: {exc}") from None
    out = Path(args.out)
    if args.scenario == "temporal_flip":
        names = []
        for l, (X, lab) in enumerate(zip(syn.data.slices, syn.labels)):
            io.write_coefficients(out / f"slice_{l}.csv", X)
            io.write_labels(out / f"labels_{l}.csv", lab)
            names.append(f"slice_{l}.csv")
        io.write_index(out / "index.csv", syn.data.times, names)
    else:
        io.write_coefficients(out / "data.csv", syn.data)
        io.write_labels(out / "labels.csv", syn.labels)
    io.write_model(out / "truth.json", syn.truth)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = io.read_config(args.config)
    data = io.read_coefficients(args.data)
    _check_dimension(cfg, data.M, f"data {args.data}")
    out = Path(args.out)
    if args.em:
        em_cfg = EmConfig(cfg["K"], cfg["em.iterations"], cfg["ridge"], cfg["seed"], cfg["covariance"], cfg["em.init"])
        res = em_fit(data, em_cfg)
        io.write_model(out / "model.json", res.final_state)
        io.write_em_trace(out / "trace.csv", res.loglik_trace)
        print(f"final_loss={io.fmt(res.loglik_trace[-1])}")
        return EXIT_OK
    kernel = _kernel(cfg, data)
    fit_cfg = FitConfig(
        K=cfg["K"],
        epochs=cfg["epochs"],
        learning_rate=cfg["lr"],
        ridge=cfg["ridge"],
        covariance_type=cfg["covariance"],
        qp_tol=cfg["qp.tol"],
        seed=cfg["seed"],
        lr_schedule="constant" if cfg["lr_final"] is None else "cosine",
        final_lr=cfg["lr_final"] or 1e-4,
        workers=cfg["workers"],
        optimizer=cfg["optimizer"],
    )
    report = fit(data, kernel, fit_cfg)
    io.write_model(out / "model.json", report.final_state)
    io.write_fit_trace(out / "trace.csv", report.loss_trace, report.qp_kkt_residuals)
    final = report.loss_trace[-1] if len(report.loss_trace) else float("nan")
    print(f"final_loss={io.fmt(final)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    data = io.read_coefficients(args.data)
    mix = io.read_model(args.model)
    if not hasattr(mix, "weights") or np.ndim(mix.weights) != 1:
        raise DataError(f"{args.model} is a temporal model; eval expects a static one")
    if mix.M != data.M:
        raise DataError(f"data {args.data} has M={data.M} but model {args.model} has M={mix.M}")
    if mix.kernel is None:
        raise DataError(f"model {args.model} has no kernel; MMD cannot be evaluated")
    gamma = responsibilities(data, mix)
    metrics = {"mmd2": mmd2(data, mix, include_constant=True).total}
    if args.labels:
        labels = io.read_labels(args.labels)
        if labels.size != data.n:
            raise DataError(f"{args.labels} has {labels.size} labels for {data.n} rows")
        metrics["ari"] = adjusted_rand_index(labels, hard_labels(gamma))
    metrics.update({"n": data.n, "K": mix.K, "M": mix.M})
    if args.out:
        io.write_json(args.out, metrics)
    print(io._dumps(metrics))
    return EXIT_OK


def cmd_temporal(args) -> int:
    cfg = io.read_config(args.config)
    index = io.read_index(args.index)
    slices = []
    for sl, _, path in index:
        if not path.exists():
            raise DataError(f"slice {sl}: file {path} not found")
        X = io.read_coefficients(path)
        _check_dimension(cfg, X.M, f"slice {sl}")
        slices.append(X)
    times = [t for _, t, _ in index]
    try:
        series = TemporalSeries(slices, times)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    pooled = np.concatenate([s.data for s in slices])
    kernel = _kernel(cfg, pooled)
    report = fit_temporal(
        series,
        kernel,
        cfg["K"],
        epochs=cfg["epochs"],
        learning_rate=cfg["lr"],
        ridge=cfg["ridge"],
        smoothness=cfg["temporal.smoothness"],
        seed=cfg["seed"],
        covariance_type=cfg["covariance"],
        workers=cfg["workers"],
    )
    out = Path(args.out)
    mix = report.mixture
    io.write_model(out / "model.json", mix)
    io.write_weights(out / "weights.csv", series.times, mix.weights)
    io.write_loss_trace(out / "trace.csv", report.loss_trace)
    if args.groups:
        membership = io.read_groups(args.groups, [sl for sl, _, _ in index], [s.n for s in slices])
        post = group_posteriors(series, mix, membership, cfg["ridge"])
        if len(post) != 2:
            raise DataError(f"TV comparison needs exactly two groups, found {len(post)}")
        a, b = (post[g] for g in sorted(post))
        io.write_tv(out / "tv.csv", series.times, group_tv(a, b))
    final = report.loss_trace[-1] if len(report.loss_trace) else float("nan")
    print(f"final_loss={io.fmt(final)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmdgmm", description="MMD-fitted Gaussian mixtures on projected coefficients.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic scenario (data, labels, truth model)")
    g.add_argument("scenario", choices=SCENARIOS)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="scenario parameter or 'scale'")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit a mixture by MMD (or EM with --em)")
    f.add_argument("data")
    f.add_argument("--config")
    f.add_argument("--out", required=True)
    f.add_argument("--em", action="store_true")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="responsibilities, MMD^2 and ARI of a model on data")
    e.add_argument("data")
    e.add_argument("--model", required=True)
    e.add_argument("--labels")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("temporal", help="fit a time-varying mixture from an index of slices")
    t.add_argument("index")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--groups", help="'slice,row,group' file with two groups for the TV comparison")
    t.set_defaults(func=cmd_temporal)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
