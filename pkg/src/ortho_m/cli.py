"""Command-line entry point: ``ortho-m {simulate, estimate, check}``.

Settings can come from a flat ``key = value`` file (``--config``); command-line
flags take precedence. Keys are the long flag names with dashes or
underscores, plus any simulation design field (``n``, ``p``, ``k_alpha``,
``sigma_u``, ...). Exit codes: 0 success, 1 configuration or usage error,
2 some replications failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .applications import SCHEMAS, resolve_model
from .data import make_folds, read_csv
from .errors import ConfigurationError, DataIntegrityError, InvalidArgumentError
from .estimators import (algorithm1, algorithm2, caption_lambda, cross_fit_estimate,
                         make_penalty_plan)
from .simulation.baselines import MethodContext
from .simulation.checks import R_GRID, gradient_fd_check, run_orthogonality
from .simulation.dgp import DGPConfig, preset
from .simulation.harness import run_replications

__all__ = ["RunConfig", "build_parser", "main", "EXIT_OK", "EXIT_CONFIG", "EXIT_PARTIAL"]

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
MODEL_CHOICES = ("plr", "logit-te", "missing", "games")
_DGP_FIELDS = {f.name: f.type for f in dataclasses.fields(DGPConfig)}
_DGP_FIELDS.pop("model")
_DGP_TYPES = {"int": int, "float": float, "str": str}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    model: str
    scale: str = "desk"
    lambda_rule: str = "caption"
    lambda_value: Optional[float] = None
    dgp_overrides: dict = field(default_factory=dict)
    out: Optional[str] = None
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_args(cls, args):
        rule, value = parse_lambda(args.lambda_)
        return cls(args.command, resolve_model(args.model), getattr(args, "scale", "desk"), rule,
                   value, dict(getattr(args, "dgp", {}) or {}), args.out, args.seed,
                   resolve_threads(getattr(args, "threads", None)))


def parse_lambda(text):
    """``caption`` | ``theorem`` | a positive number (manual)."""
    text = str(text).strip()
    if text in ("caption", "theorem"):
        return text, None
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--lambda must be 'caption', 'theorem' or a number, got {text!r}") from None
    if not value > 0:
        raise UsageError("--lambda value must be positive")
    return "manual", value


def resolve_threads(flag):
    raw = flag if flag is not None else os.environ.get("ORTHO_M_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        raise UsageError(f"thread count must be an integer, got {raw!r}") from None
    if threads < 1:
        raise UsageError("thread count must be at least 1")
    return threads


def _coerce_dgp(key, value):
    kind = _DGP_FIELDS[key]
    kind = _DGP_TYPES.get(kind if isinstance(kind, str) else kind.__name__, str)
    try:
        return kind(value)
    except ValueError:
        raise UsageError(f"{key}: cannot read {value!r} as {kind.__name__}") from None


def parse_assignments(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise UsageError(f"expected key=value, got {item!r}")
        if key not in _DGP_FIELDS:
            raise UsageError(f"unknown design field {key!r}; known: {sorted(_DGP_FIELDS)}")
        out[key] = _coerce_dgp(key, value.strip())
    return out


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _common(p, lam_default="caption"):
    p.add_argument("--model", default=None, choices=MODEL_CHOICES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lambda_", default=lam_default,
                   help="caption, theorem, or a numeric penalty level")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="flat key = value settings file")


def build_parser():
    parser = argparse.ArgumentParser(prog="ortho-m", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo comparison of estimators")
    _common(sim)
    sim.add_argument("--scale", choices=("desk", "paper"), default="desk")
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--methods", default=None, help="comma-separated method names")
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--timing", action="store_true", help="record wall-clock ms per fit")
    sim.add_argument("--direct-cv", action="store_true", help="cross-validate the Direct penalty")
    sim.add_argument("--variant", choices=("DGP1", "DGP2"), default=None)
    sim.add_argument("--set", dest="assign", action="append", default=[], metavar="KEY=VALUE",
                     help="override a design field, e.g. --set k_alpha=10")

    est = sub.add_parser("estimate", help="fit a model to a CSV dataset")
    _common(est)
    est.add_argument("--input", required=True)
    est.add_argument("--algorithm", choices=("1", "2", "crossfit"), default="crossfit")
    est.add_argument("--naive", action="store_true", help="drop the orthogonal correction")
    est.add_argument("--R0", type=float, default=None)
    est.add_argument("--R1", type=float, default=None)
    est.add_argument("--k-guess", type=int, default=None)

    chk = sub.add_parser("check", help="orthogonality and gradient diagnostics")
    _common(chk)
    chk.add_argument("--naive", action="store_true")
    chk.add_argument("--n-mc", type=int, default=200_000)
    return parser


def _apply_config(parser, argv):
    """Parse once to find the subcommand and config file, then reparse with the
    file's values installed as defaults so explicit flags win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args, {}
    settings = read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest: a for a in subparser._actions}
    aliases = {"lambda": "lambda_", "set": "assign"}
    defaults, dgp = {}, {}
    for key, value in settings.items():
        dest = aliases.get(key, key)
        if dest in ("config", "help"):
            continue
        if dest in dests:
            action = dests[dest]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[dest] = value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    defaults[dest] = action.type(value)
                except ValueError:
                    raise UsageError(f"config key {key}: bad value {value!r}") from None
            else:
                defaults[dest] = value
            if action.choices is not None and defaults[dest] not in action.choices:
                raise UsageError(f"config key {key}: {value!r} not in {sorted(action.choices)}")
        elif key in _DGP_FIELDS:
            dgp[key] = _coerce_dgp(key, value)
        else:
            raise UsageError(f"unknown config key {key!r}")
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv), dgp


def cmd_simulate(args, dgp_from_file):
    overrides = {**dgp_from_file, **parse_assignments(args.assign)}
    if args.variant:
        overrides["variant"] = args.variant
    if args.reps is not None:
        overrides["n_replications"] = args.reps
    overrides["seed"] = args.seed
    rc = RunConfig.from_args(args)
    rc.dgp_overrides = overrides
    cfg = preset(rc.model, rc.scale, **overrides)
    methods = [m.strip() for m in args.methods.split(",")] if args.methods else None
    ctx = MethodContext(lambda_rule=rc.lambda_rule, lambda_value=rc.lambda_value,
                        direct_cv=args.direct_cv, seed=rc.seed)
    report = run_replications(cfg, methods, ctx, threads=rc.threads, timing=args.timing)
    out = Path(rc.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.model}_{rc.scale}_seed{rc.seed}"
    report.to_csv(out / f"{stem}.csv")
    report.to_json(out / f"{stem}.json")
    print(f"wrote {out / (stem + '.csv')} ({len(report.records)} rows)")
    for m in report.methods:
        print(f"  {m:<12} median l2 {report.median(m):.4f}")
    if report.failures:
        for f in report.failures:
            print(f"  failed: seed {f['seed']} {f['method']}: {f['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _estimate_lambda(rc, n, p, model):
    if rc.lambda_rule == "manual":
        return rc.lambda_value
    if rc.lambda_rule == "caption":
        return caption_lambda(n, p, model)
    return make_penalty_plan(n, p).lambda_main


def cmd_estimate(args, _dgp):
    rc = RunConfig.from_args(args)
    schema = SCHEMAS[rc.model]
    data = read_csv(args.input)
    missing = [c for c in schema.scalar_columns + schema.block_columns if c not in data]
    if missing:
        raise UsageError(f"{args.input}: missing required columns {missing} for model {args.model} "
                         f"(have {sorted(data.columns)})")
    schema.validate(data)
    p = schema.param_dim(data)
    orthogonal = not args.naive
    if args.algorithm == "crossfit":
        folds = make_folds(data.n, 2, rc.seed)
        lam = _estimate_lambda(rc, data.n, p, rc.model)
        res = cross_fit_estimate(data, rc.model, folds=folds, orthogonal=orthogonal, lam=lam)
    elif args.algorithm == "1":
        folds = make_folds(data.n, 2, rc.seed)
        lam = _estimate_lambda(rc, len(folds.indices(1)), p, rc.model)
        res = algorithm1(data, rc.model, folds=folds, orthogonal=orthogonal, lam=lam)
    else:
        folds = make_folds(data.n, 3, rc.seed)
        m = len(folds.indices(2))
        kw = {"R0": args.R0} if args.R0 is not None else {}
        plan = make_penalty_plan(m, p, k_guess=args.k_guess, R1=args.R1, **kw)
        if rc.lambda_rule != "theorem":
            # keep the preliminary/final penalty ratio, set the final level
            plan = plan.anchored(_estimate_lambda(rc, m, p, rc.model))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = algorithm2(data, rc.model, plan, folds=folds, orthogonal=orthogonal)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        res.extra["plan"] = plan.as_dict()
    res.extra["model"] = args.model
    res.extra["algorithm"] = args.algorithm
    text = json.dumps(res.to_dict(), indent=2, sort_keys=True, default=_json_default)
    if rc.out:
        Path(rc.out).parent.mkdir(parents=True, exist_ok=True)
        Path(rc.out).write_text(text + "\n")
        print(f"wrote {rc.out}")
    else:
        print(text)
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    raise TypeError(type(obj).__name__)


def cmd_check(args, _dgp):
    rc = RunConfig.from_args(args)
    orthogonal = not args.naive
    slope_band = (1.7, 2.3)
    rep = run_orthogonality(rc.model, orthogonal, n_mc=args.n_mc, r_grid=R_GRID, seed=rc.seed)
    fd = gradient_fd_check(rc.model, seed=rc.seed)
    rows = [
        ("orthogonality slope", f"{rep.slope:.3f}", f"[{slope_band[0]}, {slope_band[1]}]",
         (not rep.degenerate) and slope_band[0] <= rep.slope <= slope_band[1]),
        ("gradient vs finite diff", f"{fd:.2e}", "<= 1e-05", fd <= 1e-5),
    ]
    label = "naive" if args.naive else "orthogonal"
    print(f"{args.model} ({label} loss), n_mc={args.n_mc}")
    print(f"{'check':<26}{'value':>10}  {'expected':<14}status")
    for name, value, expected, ok in rows:
        print(f"{name:<26}{value:>10}  {expected:<14}{'PASS' if ok else 'FAIL'}")
    print("r grid: " + ", ".join(f"{r:g}->{v:.3e}" for r, v in zip(rep.r_grid, rep.values)))
    if args.naive:
        print("(naive loss: a first-order slope near 1 is the expected outcome)")
    if rc.out:
        payload = {"model": args.model, "loss": label, "slope": rep.as_dict(), "fd_error": fd}
        Path(rc.out).write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "check": cmd_check}


def main(argv=None):
    parser = build_parser()
    try:
        args, dgp = _apply_config(parser, argv)
        if args.model is None:
            raise UsageError(f"--model is required (one of {', '.join(MODEL_CHOICES)})")
        return COMMANDS[args.command](args, dgp)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    except (UsageError, ConfigurationError, InvalidArgumentError, DataIntegrityError) as exc:
        print(f"ortho-m: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
