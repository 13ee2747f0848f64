"""Command-line entry points.

Usage:
    privpush run --config run.cfg [--seed 7] [--out runs]
    privpush grid --config sweep.cfg
    privpush schedule --epsilon 0.5 --delta 1e-4 --J 1000 --n 10 --d 10 --c2 1 --L 1
    privpush analyze --in runs --out summary.csv
    privpush constants --config run.cfg

Exit codes: 0 success, 1 invalid config or parameters, 2 runtime failure
(divergence or a broken invariant mid-run).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .compression import CompressionError
from .config import (
    ConfigError,
    build_compressor,
    build_engine_config,
    parse_config,
    write_run_csv,
    write_sidecar,
    _jsonable,
)
from .engine import SimulationError, check_omega_admissible, run
from .harness import (
    accuracy_bits_curves,
    grid_from_config,
    run_grid,
    summarize_runs,
    theoretical_schedule,
    write_summary,
    _write_curves,
)
from .privacy import PrivacyError, check_budget_admissible
from .problems import ProblemError
from .topology import TopologyError

VALIDATION_ERRORS = (
    ConfigError,
    TopologyError,
    CompressionError,
    PrivacyError,
    ProblemError,
    ValueError,
)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    engine_cfg, consts = build_engine_config(cfg, seed_override=args.seed)
    result = run(engine_cfg)
    os.makedirs(args.out, exist_ok=True)
    stem = f"run_seed{engine_cfg.seed}"
    csv_path = os.path.join(args.out, stem + ".csv")
    write_run_csv(csv_path, result.records)
    write_sidecar(os.path.join(args.out, stem + ".json"), cfg, result, consts)
    if result.failure is not None:
        print(f"FAILED after {len(result.records)} iterations: {result.failure}", file=sys.stderr)
        print(f"partial records: {csv_path}", file=sys.stderr)
        return 2
    last = result.records[-1]
    print(
        f"completed T={last.t}: loss_avg={last.loss_avg:.6g} "
        f"grad_norm_sq_avg={last.grad_norm_sq_avg:.6g} bits_cum={last.bits_cum}"
    )
    print(f"records: {csv_path}")
    return 0


def _cmd_grid(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    grid = grid_from_config(cfg)
    stats = run_grid(grid)
    print(
        f"grid done: {stats['executed']} executed, {stats['skipped']} skipped, "
        f"{stats['failed']} failed -> {stats['summary']}"
    )
    return 0


def _cmd_schedule(args: argparse.Namespace) -> int:
    sched = theoretical_schedule(
        epsilon=args.epsilon,
        delta=args.delta,
        J=args.J,
        n=args.n,
        d=args.d,
        c2=args.c2,
        L=args.L,
        G=args.G,
        c1=args.c1,
    )
    print(json.dumps(
        {
            "T": sched.T,
            "eta": sched.eta,
            "sigma_sq": sched.sigma_sq,
            "J_ok": sched.J_ok,
            "J_required": sched.J_required,
            "epsilon_budget_ok": sched.budget.ok,
            "epsilon_budget_bound": sched.budget.bound,
        },
        indent=2,
    ))
    if not sched.budget.ok:
        print(f"warning: {sched.budget.reason}", file=sys.stderr)
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    if not os.path.isdir(args.in_dir):
        raise ConfigError(f"not a directory: {args.in_dir}")
    rows = summarize_runs(args.in_dir)
    if not rows:
        raise ConfigError(f"no run outputs found in {args.in_dir}")
    write_summary(rows, args.out)
    curves = accuracy_bits_curves(args.in_dir)
    if curves is not None:
        curves_path = os.path.splitext(args.out)[0] + "_curves.csv"
        _write_curves(curves, curves_path)
        print(f"curves: {curves_path}")
    print(f"summary: {args.out} ({len(rows)} cells)")
    return 0


def _cmd_constants(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    engine_cfg, consts = build_engine_config(cfg)
    payload = {
        "lambda": consts.lam,
        "C": consts.C,
        "beta": consts.beta,
        "gamma": consts.gamma,
        "phi": [float(v) for v in consts.phi],
        "horizon": consts.horizon,
    }
    spec = build_compressor(cfg, engine_cfg.problem.objective.dim)
    payload["omega_check"] = _jsonable(vars(check_omega_admissible(spec, consts)))
    if engine_cfg.privacy is not None:
        payload["budget_check"] = _jsonable(vars(check_budget_admissible(engine_cfg.privacy)))
    print(json.dumps(payload, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privpush", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="enable info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_run.add_argument("--out", default="runs", help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_grid = sub.add_parser("grid", help="execute a sweep described by [grid]")
    p_grid.add_argument("--config", required=True)
    p_grid.set_defaults(func=_cmd_grid)

    p_sched = sub.add_parser("schedule", help="print the theoretical (T, eta, sigma^2)")
    p_sched.add_argument("--epsilon", type=float, required=True)
    p_sched.add_argument("--delta", type=float, required=True)
    p_sched.add_argument("--J", type=int, required=True)
    p_sched.add_argument("--n", type=int, required=True)
    p_sched.add_argument("--d", type=int, required=True)
    p_sched.add_argument("--c2", type=float, default=1.0)
    p_sched.add_argument("--L", type=float, default=1.0)
    p_sched.add_argument("--G", type=float, default=1.0)
    p_sched.add_argument("--c1", type=float, default=1.0)
    p_sched.set_defaults(func=_cmd_schedule)

    p_an = sub.add_parser("analyze", help="aggregate a directory of run outputs")
    p_an.add_argument("--in", dest="in_dir", required=True)
    p_an.add_argument("--out", default="summary.csv")
    p_an.set_defaults(func=_cmd_analyze)

    p_const = sub.add_parser("constants", help="estimate mixing constants for a config")
    p_const.add_argument("--config", required=True)
    p_const.set_defaults(func=_cmd_constants)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
