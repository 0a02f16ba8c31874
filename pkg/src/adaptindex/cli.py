"""Command-line interface.

Exit status: 0 on success, 2 for input or configuration errors, 3 for
numerical/estimation failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .adaptive import FitConfig, adaptive_fit
from .data import load_dataset
from .errors import ConfigError, EstimationError, InputError
from .models import ModelSpec
from .score import KernelSpec
from .simulation import (
    KAPPAS,
    McConfig,
    PredictorLaw,
    kappa_function,
    lemma1_residual,
    run_monte_carlo,
    score_diagnostic_curve,
)

log = logging.getLogger("adaptindex")

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION = 0, 2, 3


def _dump(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _kernel(args) -> KernelSpec:
    d = {}
    if args.bandwidth is not None:
        d["bandwidth_constant"] = args.bandwidth
    if args.trim is not None:
        d["trim_constant"] = args.trim
    return KernelSpec(**d)


def _model_and_law(args):
    problems = []
    model = law = None
    try:
        model = ModelSpec(args.model, args.error, args.sigma)
    except InputError as exc:
        problems.append(f"model: {exc}")
    try:
        law = PredictorLaw(args.law, args.p)
    except InputError as exc:
        problems.append(f"law: {exc}")
    if problems:
        raise ConfigError(problems)
    return model, law


def _beta0(args, p: int) -> np.ndarray:
    if args.beta0:
        try:
            b = np.array([float(v) for v in args.beta0.split(",")])
        except ValueError:
            raise ConfigError("beta0: expected comma-separated numbers") from None
        if b.size != p or not np.linalg.norm(b) > 0:
            raise ConfigError(f"beta0: need {p} coordinates, not all zero")
        return b / np.linalg.norm(b)
    return np.ones(p) / np.sqrt(p)


def cmd_fit(args) -> int:
    data = load_dataset(args.data)
    cfg = FitConfig(
        kernel=_kernel(args),
        use_discretization=args.discretize,
        use_sample_splitting=not args.no_split,
        seed=args.seed,
    )
    res = adaptive_fit(data, cfg)
    _dump(res.to_json_dict(), args.out)
    return EXIT_OK


def _read_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def cmd_simulate(args) -> int:
    raw = _read_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = McConfig.from_dict(raw)
    if args.threads < 1:
        raise ConfigError("threads: must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(done, total):
        if not args.quiet:
            print(f"\r{done}/{total} replications", end="", file=sys.stderr, flush=True)

    report = run_monte_carlo(cfg, threads=args.threads, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.csv").write_text(report.to_csv())
    print(report.summary_table())
    return EXIT_OK


def cmd_check_lemma1(args) -> int:
    if args.kappa not in KAPPAS:
        raise ConfigError(f"unknown kappa {args.kappa!r}; valid names: {', '.join(KAPPAS)}")
    model, law = _model_and_law(args)
    beta = _beta0(args, law.p)
    kappa = kappa_function(args.kappa, model)
    rng = np.random.default_rng(args.seed)
    norm, se = lemma1_residual(kappa, beta, model, law, args.n_mc, rng)
    _dump(
        {
            "kappa": args.kappa,
            "model": vars(model),
            "law": vars(law),
            "beta": beta.tolist(),
            "n_mc": args.n_mc,
            "seed": args.seed,
            "residual_norm": norm,
            "mc_se": se,
            "ratio": norm / se if se > 0 else None,
        },
        args.out,
    )
    return EXIT_OK


def _parse_grid(text: str) -> list[int]:
    try:
        grid = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("n-grid: expected comma-separated integers") from None
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 10:
        raise ConfigError("n-grid: need strictly increasing integers >= 10")
    return grid


def cmd_score_diag(args) -> int:
    grid = _parse_grid(args.n_grid)
    if args.replications < 1:
        raise ConfigError("replications: must be >= 1")
    model, law = _model_and_law(args)
    result = score_diagnostic_curve(
        model,
        law,
        _beta0(args, law.p),
        grid,
        replications=args.replications,
        n_eval=args.n_eval,
        kernel=_kernel(args),
        seed=args.seed,
    )
    _dump(result, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptindex",
        description="Adaptive estimation of single-index directions.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_kernel(p):
        p.add_argument("--bandwidth", type=float, help="bandwidth constant")
        p.add_argument("--trim", type=float, help="trim constant")

    def add_model(p):
        p.add_argument("--model", default="identity", help="link: identity | sine | cubic_smooth")
        p.add_argument("--error", default="gaussian", help="gaussian | laplace | student_t")
        p.add_argument("--sigma", type=float, default=1.0, help="error scale")
        p.add_argument("--law", default="gaussian", help="gaussian | elliptical_t | uniform_cube")
        p.add_argument("--p", type=int, default=3, help="number of predictors")
        p.add_argument("--beta0", help="comma-separated direction (normalized); default all-equal")

    p = sub.add_parser("fit", help="fit the adaptive estimator to a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-split", action="store_true")
    p.add_argument("--discretize", action="store_true")
    add_kernel(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory for report.json / report.csv")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-lemma1", help="Monte Carlo Fisher-consistency residual")
    p.add_argument("--kappa", required=True, help=f"one of: {', '.join(KAPPAS)}")
    p.add_argument("--n-mc", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    add_model(p)
    p.set_defaults(func=cmd_check_lemma1)

    p = sub.add_parser("score-diag", help="score-estimate L2 diagnostic over an n grid")
    p.add_argument("--n-grid", default="500,1000,2000,4000")
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--n-eval", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    add_model(p)
    add_kernel(p)
    p.set_defaults(func=cmd_score_diag)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
