#!/usr/bin/env python3
"""Reproduce the Monte Carlo summary tables.

Runs the simulation study over both treatment-assignment models and a
grid of sample sizes, printing bias (x100), RMSE (x100), and coverage
per estimator, and optionally writing the full reports as JSON.  At the
published settings (1000 replications) this takes a few minutes per
(model, n) pair with the GLM learner; pass --reps to trade precision
for speed.
"""

import argparse
import json
import time
from pathlib import Path

from sepfx.simulation import SimConfig, run_monte_carlo


def print_table(report) -> None:
    header = (
        f"  {'estimator':<15}{'bias x100':>11}{'rmse x100':>11}{'coverage':>10}{'failures':>10}"
    )
    print(header)
    print("  " + "-" * (len(header) - 2))
    for row in report.rows:
        print(
            f"  {row.estimator:<15}{100 * row.bias:>11.2f}{100 * row.rmse:>11.2f}"
            f"{row.coverage:>10.3f}{row.failures:>10d}"
        )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--models", default="1,2", help="comma-separated model ids")
    parser.add_argument("--sizes", default="1000,2000,4000", help="comma-separated n")
    parser.add_argument("--reps", type=int, default=1000)
    parser.add_argument("--learner", default="glm", choices=("glm", "rf", "sl"))
    parser.add_argument("--k-folds", type=int, default=2)
    parser.add_argument("--splits", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default=None, help="directory for JSON reports")
    args = parser.parse_args()

    models = [int(v) for v in args.models.split(",") if v.strip()]
    sizes = [int(v) for v in args.sizes.split(",") if v.strip()]
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    for model in models:
        for n in sizes:
            cfg = SimConfig(
                n=n,
                a_y_model=model,
                reps=args.reps,
                master_seed=args.seed,
                learner=args.learner,
                k_folds=args.k_folds,
                splits=args.splits,
                threads=args.threads,
            )
            report = run_monte_carlo(cfg)
            print(f"model {model}, n={n}, reps={args.reps}, learner={args.learner} "
                  f"({report.runtime_seconds:.1f}s)")
            print_table(report)
            print()
            if out_dir:
                path = out_dir / f"mc_model{model}_n{n}_{args.learner}.json"
                path.write_text(
                    json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
                )
                print(f"  wrote {path}\n")
    print(f"total {time.perf_counter() - start:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
