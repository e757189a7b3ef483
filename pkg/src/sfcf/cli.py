"""Command-line interface: ``sfcf fit | test | simulate | reproduce | run``.

Exit codes: 0 success, 2 usage or input error, 3 fit did not converge,
4 bootstrap failure budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .distributions import ComposedSpec, Orientation, sample_composed
from .estimation import FitError, NullModel, Sample, fit_mle
from .experiments import McConfig, emit_results, lookup_table, run_table
from .resampling import MonteCarloAbort, Statistic, full_bootstrap_test

EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_BUDGET = 4


class InputError(ValueError):
    pass


# -- helpers -------------------------------------------------------------------


def read_sample(path, intercept: bool = True) -> Sample:
    """Headered CSV with a ``y`` column and optional ``x1..xd`` regressors."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if "y" not in header:
            raise InputError(f"{path}: missing required column 'y'")
        xcols = sorted((h for h in header if h.startswith("x") and h[1:].isdigit()), key=lambda h: int(h[1:]))
        if xcols != [f"x{i}" for i in range(1, len(xcols) + 1)]:
            raise InputError(f"{path}: regressor columns must be x1..xd without gaps, got {xcols}")
        idx = [header.index("y")] + [header.index(c) for c in xcols]
        names = ["y"] + xcols
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise InputError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for i, name in zip(idx, names):
                cell = rec[i].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(f"{path}: row {lineno}, column '{name}': {cell!r} is not a number") from None
                if not np.isfinite(v):
                    raise InputError(f"{path}: row {lineno}, column '{name}': non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    x = data[:, 1:] if xcols else None
    try:
        return Sample(data[:, 0], x, intercept)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _null_model(args) -> NullModel:
    orientation = Orientation(args.orientation)
    return NullModel.exponential(orientation) if args.variant == "exp" else NullModel.gamma2(orientation)


def _resolve_seed(seed):
    if seed is None:
        seed = secrets.randbits(63)
        print(f"seed: {seed}", file=sys.stderr)
    return seed


def _digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_path, command: str, config: dict, seed, started: str, extra=None) -> Path:
    """Write ``<out>.manifest.json`` describing the run that produced ``out_path``."""
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "config_digest": _digest(config),
        "master_seed": seed,
        "version": __version__,
        "started": started,
        "finished": _now(),
    }
    if extra:
        manifest.update(extra)
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")
    return path


def _print_fit(fit) -> None:
    print(f"null model     : {fit.null_model.name}")
    for i, b in enumerate(fit.beta):
        print(f"beta[{i}]        : {b:.6f}")
    print(f"sigma_v        : {fit.sigma_v:.6f}")
    print(f"theta          : {fit.theta:.6f}")
    print(f"log-likelihood : {fit.loglik:.6f}")
    print(f"converged      : {fit.converged}")


# -- commands ------------------------------------------------------------------


def cmd_fit(args) -> int:
    started = _now()
    sample = read_sample(args.data, intercept=not args.no_intercept)
    fit = fit_mle(sample, _null_model(args))
    _print_fit(fit)
    if args.json:
        Path(args.json).write_text(json.dumps(fit.to_dict(), indent=2) + "\n", encoding="utf-8")
        config = {"data": str(args.data), "variant": args.variant, "orientation": args.orientation, "intercept": not args.no_intercept}
        write_manifest(args.json, "fit", config, None, started)
    if not fit.converged:
        print("warning: optimiser did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return 0


def cmd_test(args) -> int:
    started = _now()
    if args.stat == "cf" and not (args.lam > 0):
        raise InputError("--lambda must be positive")
    if args.B < 1:
        raise InputError("-B must be positive")
    if not 0 < args.alpha < 1:
        raise InputError("--alpha must lie in (0, 1)")
    seed = _resolve_seed(args.seed)
    sample = read_sample(args.data, intercept=not args.no_intercept)
    statistic = Statistic.cf(args.lam) if args.stat == "cf" else Statistic(args.stat)
    try:
        outcome = full_bootstrap_test(sample, _null_model(args), statistic, args.B, args.alpha, seed, args.threads)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except MonteCarloAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    _print_fit(outcome.fit)
    print(f"statistic      : {outcome.statistic} = {outcome.value:.10g}")
    print(f"critical value : {outcome.critical:.10g} (alpha={outcome.alpha:g}, B={outcome.B})")
    print(f"p-value        : {outcome.p_value:.6f}")
    print(f"decision       : {'reject' if outcome.reject else 'do not reject'} H0")
    if args.json:
        record = outcome.to_dict()
        record["fit"] = outcome.fit.to_dict()
        Path(args.json).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
        config = {
            "data": str(args.data),
            "variant": args.variant,
            "orientation": args.orientation,
            "stat": args.stat,
            "lambda": args.lam if args.stat == "cf" else None,
            "B": args.B,
            "alpha": args.alpha,
        }
        write_manifest(args.json, "test", config, seed, started)
    return 0


def cmd_simulate(args) -> int:
    started = _now()
    seed = _resolve_seed(args.seed)
    orientation = Orientation(args.orientation)
    if args.generator == "exp":
        spec = ComposedSpec.normal_exponential(args.sigma_v, args.param, orientation)
    elif args.generator == "gamma":
        spec = ComposedSpec.normal_gamma(args.sigma_v, args.kappa, args.param, orientation)
    else:
        spec = ComposedSpec.normal_halfnormal(args.sigma_v, args.param, orientation)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    beta = np.asarray(args.beta, dtype=float)
    d = beta.size - 1
    x = rng.standard_normal((args.n, d))
    y = beta[0] + x @ beta[1:] + sample_composed(spec, args.n, rng)
    with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"x{i}" for i in range(1, d + 1)])
        for row in np.column_stack([y, x]):
            w.writerow([repr(float(v)) for v in row])
    config = {"generator": spec.describe(), "n": args.n, "beta": list(beta)}
    write_manifest(args.out, "simulate", config, seed, started)
    return 0


def _parse_only(text, design):
    only = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise InputError(f"--only expects key=value pairs, got {part!r}")
        key = key.strip()
        try:
            if key == "n":
                only.setdefault("n", []).append(int(value))
            elif key in (design.param, "param"):
                only.setdefault("param", []).append(float(value))
            else:
                raise InputError(f"--only key must be 'n' or '{design.param}', got {key!r}")
        except ValueError:
            raise InputError(f"--only: bad value in {part!r}") from None
    return only


def _run_study(config: McConfig, only, args, command: str) -> int:
    started = _now()

    def progress(design, value, n, runs, elapsed):
        summary = ", ".join(f"{k}={100 * r.rejection_rate:.1f}%" for k, r in runs.items())
        print(f"[{design.table_id}] {design.param}={value:g} n={n}: {summary} ({elapsed:.1f}s)", file=sys.stderr)

    try:
        rows = run_table(config, only=only, progress=progress)
    except MonteCarloAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    out = args.out or f"{config.table_id}.{args.format}"
    emit_results(rows, args.format, out, timing=args.timing)
    extra = {"rows": len(rows), "only": only, "elapsed_s": sum({(r.param, r.n): r.elapsed_s for r in rows}.values())}
    write_manifest(out, command, {k: v for k, v in config.to_dict().items() if k != "workers"}, config.master_seed, started, extra)
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return 0


def cmd_reproduce(args) -> int:
    try:
        design = lookup_table(args.table_id)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    only = _parse_only(args.only, design) if args.only else None
    seed = _resolve_seed(args.seed)
    kwargs = {"table_id": design.table_id, "M": args.m, "master_seed": seed, "workers": args.threads, "alpha": args.alpha}
    if args.lambdas:
        kwargs["lambda_grid"] = args.lambdas
    if args.no_classical:
        kwargs["include_classical"] = False
    try:
        config = McConfig(**kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return _run_study(config, only, args, "reproduce")


def cmd_run(args) -> int:
    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if "master_seed" not in data:
            data["master_seed"] = _resolve_seed(args.seed)
        data["workers"] = args.threads
        config = McConfig.from_dict(data)
    except (OSError, json.JSONDecodeError, ValueError, TypeError, KeyError) as exc:
        raise InputError(f"{args.config}: {exc}") from None
    return _run_study(config, None, args, "run")


# -- parser --------------------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _add_model_flags(p):
    p.add_argument("--variant", "--null", dest="variant", choices=("exp", "gamma2"), default="exp", help="null model (default: exp)")
    p.add_argument("--orientation", choices=("production", "cost"), default="production")
    p.add_argument("--no-intercept", action="store_true", help="do not add an intercept column")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfcf", description="Characteristic-function goodness-of-fit tests for stochastic frontier models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    default_threads = os.cpu_count() or 1

    p = sub.add_parser("fit", help="maximum-likelihood fit of a dataset")
    p.add_argument("data", help="headered CSV with y and optional x1..xd")
    _add_model_flags(p)
    p.add_argument("--json", metavar="PATH", help="also write the fit as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="parametric-bootstrap goodness-of-fit test of a dataset")
    p.add_argument("data")
    _add_model_flags(p)
    p.add_argument("--stat", choices=("cf", "ks", "cvm"), default="cf")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="weight decay of the cf statistic")
    p.add_argument("-B", "--bootstrap", dest="B", type=int, default=499)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=_positive_int, default=default_threads)
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--generator", choices=("exp", "gamma", "halfnormal"), default="exp")
    p.add_argument("--param", type=float, default=1.0, help="theta (exp, gamma) or sigma_u (halfnormal)")
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--sigma-v", type=float, default=1.0)
    p.add_argument("--beta", type=float, nargs="+", default=[0.5], help="intercept followed by slopes")
    p.add_argument("--orientation", choices=("production", "cost"), default="production")
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    def study_flags(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=_positive_int, default=default_threads)
        p.add_argument("--out", help="output path (default: <table>.<format>)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--timing", action="store_true", help="record wall time in elapsed_s (breaks byte-identical reruns)")

    p = sub.add_parser("reproduce", help="rerun one of the size/power tables")
    p.add_argument("table_id", help="exp-size, exp-power-hn, gamma-size, gamma-power-exp, gamma-power-k3, gamma-power-k05")
    p.add_argument("--m", type=int, default=500, help="Monte Carlo iterations per cell (default 500)")
    p.add_argument("--only", help="restrict cells, e.g. theta=1,n=100")
    p.add_argument("--lambdas", type=float, nargs="+")
    p.add_argument("--no-classical", action="store_true", help="skip KS and CvM")
    p.add_argument("--alpha", type=float, default=0.05)
    study_flags(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("run", help="run a Monte Carlo study described by a JSON config")
    p.add_argument("--config", required=True)
    study_flags(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        parser.exit(EXIT_USAGE, f"{parser.prog} {args.command}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
