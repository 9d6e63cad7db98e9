#!/usr/bin/env python3
"""Desk-scale budgeted-utility experiment: total utility vs server budget.

Runs the utility heuristic and both fixed mechanisms at several server
energy budgets, plus a user-count sweep at a fixed budget.  Infeasible
instances contribute utility 0 to the averages.
"""

import argparse
import pathlib

from mvcast.cli import SweepSpec, emit_report, run_sweep

SCHEMES = ("dc", "server-baseline", "user-baseline")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/utility")
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--seed", type=int, default=21)
    ap.add_argument("--multistart", type=int, default=2)
    ap.add_argument("--channel", choices=("iid", "correlated"),
                    default="correlated")
    args = ap.parse_args()
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    common = dict(reps=args.reps, seed=args.seed, schemes=SCHEMES,
                  channel=args.channel, multistart=args.multistart,
                  problem="utility")

    csv_path = out / "users.csv"
    rows = run_sweep(SweepSpec(axis="K", values=(2, 3, 4), V=3, Q=1,
                               **common), csv_path)
    emit_report(csv_path, out / "users.svg")
    print(f"users: {len(rows)} rows -> {csv_path}")

    for tag, budget in (("tight", 5e-4), ("medium", 2e-3), ("loose", 1e-2)):
        spec = SweepSpec(axis="K", values=(2, 3), V=3, Q=1,
                         budget_server=budget, **common)
        csv_path = out / f"budget_{tag}.csv"
        rows = run_sweep(spec, csv_path)
        emit_report(csv_path, out / f"budget_{tag}.svg")
        print(f"budget {tag} ({budget:g} J): {len(rows)} rows -> {csv_path}")


if __name__ == "__main__":
    main()
