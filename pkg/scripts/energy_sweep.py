#!/usr/bin/env python3
"""Desk-scale energy experiment: heuristic vs baselines along three axes.

Writes one CSV + SVG pair per axis (user count, popularity skew, grid
spacing) into the output directory.  Defaults finish in a few minutes;
raise --reps for smoother curves.
"""

import argparse
import pathlib

from mvcast.cli import SweepSpec, emit_report, run_sweep

SCHEMES = ("dc", "server-baseline", "user-baseline")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/energy")
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--multistart", type=int, default=2)
    ap.add_argument("--channel", choices=("iid", "correlated"),
                    default="correlated")
    args = ap.parse_args()
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    common = dict(reps=args.reps, seed=args.seed, schemes=SCHEMES,
                  channel=args.channel, multistart=args.multistart)

    sweeps = {
        "users": SweepSpec(axis="K", values=(2, 3, 4, 5, 6), **common),
        "skew": SweepSpec(axis="gamma", values=(0.0, 0.5, 1.0, 1.5, 2.0),
                          K=5, Q=5, **common),
        "grid": SweepSpec(axis="invQ", values=(1.0, 0.5, 0.2), K=4, **common),
    }
    for name, spec in sweeps.items():
        csv_path = out / f"{name}.csv"
        rows = run_sweep(spec, csv_path)
        emit_report(csv_path, out / f"{name}.svg")
        print(f"{name}: {len(rows)} rows -> {csv_path}")


if __name__ == "__main__":
    main()
