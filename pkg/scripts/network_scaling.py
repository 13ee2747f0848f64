"""Check that adding nodes buys utility under a fixed privacy budget.

For each network size the horizon and step size come from the closed-form
schedule at the shared (epsilon, delta, J, d), so larger graphs genuinely
pay the same per-node privacy cost.  Prints the time-averaged squared
gradient norm of the network average per size and whether it decreases.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

from privpush.compression import CompressorSpec
from privpush.engine import EngineConfig, run
from privpush.harness import run_scheduled, theoretical_schedule, utility_probe
from privpush.privacy import PrivacySpec
from privpush.problems import make_problem
from privpush.topology import build_graph, build_mixing


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--out", default="results/scaling")
    parser.add_argument("--sizes", default="4,8,16")
    parser.add_argument("--epsilon", type=float, default=0.5)
    parser.add_argument("--delta", type=float, default=1e-4)
    parser.add_argument("--j", type=int, default=200)
    parser.add_argument("--d", type=int, default=10)
    parser.add_argument("--clip-g", type=float, default=1.5)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--synth-seed", type=int, default=11)
    args = parser.parse_args(argv)

    sizes = sorted({int(tok) for tok in args.sizes.split(",")})
    results_by_n = {}
    schedules = {}
    for n in sizes:
        sched = theoretical_schedule(
            epsilon=args.epsilon, delta=args.delta, J=args.j, n=n, d=args.d, G=args.clip_g
        )
        schedules[n] = sched
        problem = make_problem(
            "quadratic", d=args.d, n=n, J=args.j, synth_seed=args.synth_seed, spread=0.3
        )
        mix = build_mixing(build_graph("exponential", n))
        outs = []
        for seed in range(args.seeds):
            cfg = EngineConfig(
                mixing=mix,
                problem=problem,
                compressor=CompressorSpec("identity", args.d),
                privacy=PrivacySpec(
                    epsilon=args.epsilon,
                    delta=args.delta,
                    G=args.clip_g,
                    J=args.j,
                    T=1,
                    d=args.d,
                ),
                eta=1.0,
                T=1,
                seed=seed,
            )
            result = run_scheduled(cfg, sched)
            if not result.completed:
                print(f"n={n} seed={seed} aborted: {result.failure}", file=sys.stderr)
                return 2
            outs.append(result)
        results_by_n[n] = outs
        print(f"n={n}: T={sched.T} eta={sched.eta:.5g} sigma_sq={sched.sigma_sq:.5g}")

    report = utility_probe(results_by_n)
    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "scaling.csv")
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "T", "eta", "sigma_sq", "mean_metric", "ratio_to_prev"])
        for row in report.rows:
            sched = schedules[row.n]
            writer.writerow(
                [
                    row.n,
                    sched.T,
                    repr(sched.eta),
                    repr(sched.sigma_sq),
                    repr(row.mean_metric),
                    "" if row.ratio_to_prev is None else repr(row.ratio_to_prev),
                ]
            )

    print(f"\n{'n':>4} {'metric':>12} {'ratio':>8}")
    for row in report.rows:
        ratio = "-" if row.ratio_to_prev is None else f"{row.ratio_to_prev:.3f}"
        print(f"{row.n:>4} {row.mean_metric:>12.5g} {ratio:>8}")
    print(f"decreasing in n: {report.decreasing}  ({table_path})")
    return 0 if report.decreasing else 2


if __name__ == "__main__":
    sys.exit(main())
