"""Compare compression operators at a fixed privacy budget.

Runs the logistic task on a directed exponential graph once per operator
(identity, rand:0.5, gsgd:8 by default) with the same horizon and seeds,
then prints final accuracy against total bits pushed.  Per-run CSVs, the
summary table, and the accuracy-versus-bits curves land in --out.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

from privpush.harness import ExperimentGrid, run_grid


def build_grid(args: argparse.Namespace) -> ExperimentGrid:
    base_cfg = {
        "topology": {"kind": "exponential", "n": str(args.n)},
        "problem": {
            "kind": "logistic",
            "d": str(args.d),
            "j": str(args.j),
            "synth_seed": str(args.synth_seed),
            "margin": "2.5",
        },
        "privacy": {"delta": repr(args.delta), "clip_g": "1.5"},
        "run": {"eta": repr(args.eta), "t": str(args.t), "seed": str(args.seed)},
    }
    return ExperimentGrid(
        base_cfg=base_cfg,
        epsilons=[args.epsilon],
        compressor_tags=args.compressors.split(","),
        algorithms=["dp-csgp"],
        repeats=args.repeats,
        out_dir=args.out,
        master_seed=args.seed,
    )


def print_table(out_dir: str) -> None:
    with open(os.path.join(out_dir, "summary.csv")) as fh:
        rows = list(csv.DictReader(fh))
    base_bits = None
    for row in rows:
        if row["compressor"] == "identity":
            base_bits = float(row["final_bits_mean"])
    print(f"{'operator':<12} {'accuracy':>18} {'total bits':>14} {'vs identity':>12}")
    for row in rows:
        acc = f"{float(row['final_acc_mean']):.4f} +/- {float(row['final_acc_std']):.4f}"
        bits = float(row["final_bits_mean"])
        rel = f"{bits / base_bits:.3f}" if base_bits else "-"
        print(f"{row['compressor']:<12} {acc:>18} {bits:>14.3g} {rel:>12}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--out", default="results/communication")
    parser.add_argument("--epsilon", type=float, default=0.5)
    parser.add_argument("--delta", type=float, default=1e-4)
    parser.add_argument("--compressors", default="identity,rand:0.5,gsgd:8")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--d", type=int, default=50)
    parser.add_argument("--j", type=int, default=200)
    parser.add_argument("--t", type=int, default=300)
    parser.add_argument("--eta", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--synth-seed", type=int, default=4)
    args = parser.parse_args(argv)

    stats = run_grid(build_grid(args))
    print(
        f"{stats['executed']} executed, {stats['skipped']} skipped, "
        f"{stats['failed']} failed -> {args.out}"
    )
    print_table(args.out)
    print(f"accuracy-vs-bits curves: {os.path.join(args.out, 'curves.csv')}")
    return 0 if stats["failed"] == 0 else 2


if __name__ == "__main__":
    sys.exit(main())
