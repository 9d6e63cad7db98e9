"""Command-line front end: scenario generation, solving, sweeps, reports.

Requests follow the two-region Zipf workload: the middle views [2, V-1]
form the popular region with probability 1/(1 + 2^-gamma), the edge views
the tail, uniform within each region.  Sweeps write one CSV row per
(point, repetition, scheme) with matched request draws per repetition
index across schemes and axis points (common random numbers).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import dcsolver, oracle
from .convexcore import ConvexSolveConfig
from .dcsolver import DcConfig
from .errors import ConvergenceError, DomainError, InfeasibleError, SizeCapError
from .model import (Budgets, ChannelModel, Scenario, SystemParams, ViewGrid,
                    load_scenario, save_scenario)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_SIZE_CAP = 4

CSV_COLUMNS = ("run_id", "seed", "scheme", "K", "gamma", "Q", "delta",
               "objective", "feasible", "views_transmitted", "iters",
               "runtime_ms", "status")


@dataclass(frozen=True)
class RequestDistribution:
    """Two-region Zipf popularity over the view grid."""

    gamma: float
    grid: ViewGrid

    def __post_init__(self):
        if self.gamma < 0:
            raise DomainError("Zipf exponent must be nonnegative")

    @property
    def p1(self) -> float:
        return 1.0 / (1.0 + 2.0 ** (-self.gamma))

    @property
    def p2(self) -> float:
        return 1.0 - self.p1

    def regions(self):
        """(popular middle views, edge views) as grid indices."""
        g = self.grid
        mid = [int(v) for v in g.indices() if 2 * g.Q <= v <= (g.V - 1) * g.Q]
        edge = [int(v) for v in g.indices() if v not in set(mid)]
        return mid, edge

    def pmf(self) -> dict[int, float]:
        mid, edge = self.regions()
        out = {v: self.p1 / len(mid) for v in mid}
        out.update({v: self.p2 / len(edge) for v in edge})
        return out


def gen_requests(K: int, dist: RequestDistribution, seed) -> tuple[int, ...]:
    """I.i.d. two-region Zipf draws, reproducible via a counter-based RNG.

    Inverse-CDF sampling on a shared uniform stream, so runs with the same
    seed but different gamma share their underlying randomness (common
    random numbers across sweep points).
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    mid, edge = dist.regions()
    out = []
    for _ in range(K):
        u_region = rng.random()
        u_view = rng.random()
        region = mid if u_region < dist.p1 else edge
        out.append(region[min(int(u_view * len(region)), len(region) - 1)])
    return tuple(out)


@dataclass(frozen=True)
class SweepSpec:
    """One experiment grid: an axis, its values, and the schemes to run."""

    axis: str                      # "K" | "gamma" | "invQ"
    values: tuple
    reps: int = 100
    schemes: tuple[str, ...] = ("dc", "server-baseline", "user-baseline")
    seed: int = 0
    problem: str = "energy"        # "energy" | "utility"
    V: int = 5
    Q: int = 2
    K: int = 4
    gamma: float = 1.0
    delta_views: int = 1
    channel: str = "iid"           # "iid" | "correlated"
    budget_server: float = 10e-3
    budget_user: float = 1e-3
    stable_output: bool = False
    multistart: int = 3

    def __post_init__(self):
        if self.axis not in ("K", "gamma", "invQ"):
            raise DomainError(f"unknown sweep axis {self.axis}")
        if not self.values or self.reps < 1:
            raise DomainError("sweep needs values and at least one repetition")
        if self.problem not in ("energy", "utility"):
            raise DomainError(f"unknown problem {self.problem}")


def _cell_scenario(spec: SweepSpec, value, rep: int) -> tuple[Scenario, int]:
    K, gamma, Q = spec.K, spec.gamma, spec.Q
    if spec.axis == "K":
        K = int(value)
    elif spec.axis == "gamma":
        gamma = float(value)
    else:
        Q = int(round(1.0 / float(value))) if float(value) < 1 else int(value)
    grid = ViewGrid(V=spec.V, Q=Q)
    rep_seed = [spec.seed, rep]
    requests = gen_requests(K, RequestDistribution(gamma=gamma, grid=grid), rep_seed)
    if spec.channel == "correlated":
        channel = ChannelModel.two_state_correlated(K)
    else:
        channel = ChannelModel.two_state()
    budgets = None
    if spec.problem == "utility":
        budgets = Budgets(E_bar_b=spec.budget_server,
                          E_bar_u=(spec.budget_user,) * K)
    sc = Scenario(grid=grid, requests=requests,
                  deltas=(spec.delta_views * Q,) * K,
                  channel=channel, budgets=budgets)
    return sc, spec.seed * 1_000_003 + rep


def _run_scheme(scheme: str, scenario: Scenario, spec: SweepSpec, seed: int):
    """Returns (objective, feasible, views, iters) for one sweep cell."""
    dc_cfg = DcConfig(multistart=spec.multistart, seed=seed)
    if spec.problem == "energy":
        if scheme == "optimal":
            r = dcsolver.algorithm1_optimal_energy(scenario)
        elif scheme == "dc":
            r = dcsolver.algorithm2_dc_energy(scenario, dc_cfg)
        elif scheme == "server-baseline":
            r = dcsolver.plan_energy_baseline_server(scenario)
        elif scheme == "user-baseline":
            r = dcsolver.plan_energy_baseline_user(scenario)
        else:
            raise DomainError(f"unknown energy scheme {scheme}")
    else:
        if scheme == "dc":
            r = dcsolver.algorithm3_dc_utility(scenario, dc_cfg)
        elif scheme == "server-baseline":
            r = dcsolver.plan_utility_baseline_server(scenario)
        elif scheme == "user-baseline":
            r = dcsolver.plan_utility_baseline_user(scenario)
        else:
            raise DomainError(f"unknown utility scheme {scheme}")
    return r


def run_sweep(spec: SweepSpec, out_path) -> list[dict]:
    """Execute the sweep and write the CSV; returns the row dicts."""
    rows = []
    run_id = 0
    for value in spec.values:
        for rep in range(spec.reps):
            scenario, seed = _cell_scenario(spec, value, rep)
            for scheme in spec.schemes:
                run_id += 1
                t0 = time.perf_counter()
                status = "ok"
                result = None
                try:
                    result = _run_scheme(scheme, scenario, spec, seed)
                except InfeasibleError:
                    status = "infeasible"
                except ConvergenceError:
                    status = "no-convergence"
                except SizeCapError:
                    status = "size-cap"
                ms = 0.0 if spec.stable_output else (time.perf_counter() - t0) * 1e3
                if result is not None:
                    delta = (np.mean(result.deltas) / scenario.grid.Q
                             if result.deltas is not None
                             else spec.delta_views)
                    row = {"objective": result.objective,
                           "feasible": int(result.feasible),
                           "views_transmitted": result.views_transmitted,
                           "iters": int(result.diagnostics.get("iterations", 0)),
                           "delta": float(delta)}
                else:
                    row = {"objective": float("nan"), "feasible": 0,
                           "views_transmitted": 0, "iters": 0,
                           "delta": float(spec.delta_views)}
                row.update({"run_id": run_id, "seed": seed, "scheme": scheme,
                            "K": scenario.K, "gamma": spec.gamma
                            if spec.axis != "gamma" else float(value),
                            "Q": scenario.grid.Q, "runtime_ms": ms,
                            "status": status})
                rows.append(row)
    _write_csv(rows, spec, out_path)
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(rows, spec: SweepSpec, path) -> None:
    with open(path, "w") as f:
        f.write(f"# seed={spec.seed} axis={spec.axis} problem={spec.problem}\n")
        f.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row[c]) for c in CSV_COLUMNS) + "\n")


# ---------------------------------------------------------------------------
# Chart emission

def read_sweep_csv(path):
    """Parse a sweep CSV back into (meta dict, row dicts)."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DomainError(f"{path}:1: missing sweep header comment")
    meta = dict(kv.split("=") for kv in lines[0][1:].split())
    header = lines[1].split(",")
    if tuple(header) != CSV_COLUMNS:
        raise DomainError(f"{path}:2: unexpected CSV columns")
    rows = []
    for i, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise DomainError(f"{path}:{i}: wrong field count")
        row = dict(zip(CSV_COLUMNS, parts))
        for c in ("objective", "delta", "runtime_ms", "gamma"):
            row[c] = float(row[c])
        for c in ("run_id", "K", "Q", "feasible", "views_transmitted", "iters"):
            row[c] = int(row[c])
        rows.append(row)
    return meta, rows


def _axis_value(row, axis):
    if axis == "K":
        return row["K"]
    if axis == "gamma":
        return row["gamma"]
    return 1.0 / row["Q"]


def emit_report(csv_path, out_path) -> str | None:
    """Render per-scheme mean objective vs axis value as a standalone SVG.

    The exact series data is embedded in a <desc> JSON block so the chart
    can be re-parsed without loss; the drawing is purely a view of it.
    """
    meta, rows = read_sweep_csv(csv_path)
    axis = meta["axis"]
    schemes = sorted({r["scheme"] for r in rows})
    if not schemes:
        sys.stderr.write("warning: no schemes in CSV, skipping chart\n")
        return None
    series = {}
    for scheme in schemes:
        pts = {}
        for r in rows:
            if r["scheme"] != scheme:
                continue
            pts.setdefault(_axis_value(r, axis), []).append(r["objective"])
        series[scheme] = sorted((x, float(np.mean(v))) for x, v in pts.items())
    payload = json.dumps({"axis": axis, "series": series}, sort_keys=True)

    xs = sorted({x for s in series.values() for x, _ in s})
    ys = [y for s in series.values() for _, y in s if np.isfinite(y)]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    W, H, M = 640, 420, 60
    sx = lambda x: M + (x - x_lo) / (x_hi - x_lo) * (W - 2 * M)
    sy = lambda y: H - M - (y - y_lo) / (y_hi - y_lo) * (H - 2 * M)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f"<desc>{payload}</desc>",
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{M}" y1="{H - M}" x2="{W - M}" y2="{H - M}" stroke="black"/>',
        f'<line x1="{M}" y1="{M}" x2="{M}" y2="{H - M}" stroke="black"/>',
        f'<text x="{W // 2}" y="{H - 15}" text-anchor="middle">{axis}</text>',
    ]
    for i, scheme in enumerate(schemes):
        col = colors[i % len(colors)]
        pts = [(sx(x), sy(y)) for x, y in series[scheme] if np.isfinite(y)]
        poly = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
        parts.append(f'<polyline points="{poly}" fill="none" stroke="{col}"/>')
        for px, py in pts:
            parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{col}"/>')
        parts.append(f'<text x="{W - M + 5}" y="{M + 15 * i}" fill="{col}" '
                     f'font-size="11">{scheme}</text>')
    parts.append("</svg>")
    with open(out_path, "w") as f:
        f.write("\n".join(parts) + "\n")
    return out_path


# ---------------------------------------------------------------------------
# Subcommand handlers

def _result_payload(result, scenario) -> dict:
    g = scenario.grid
    d = {
        "scheme": result.scheme,
        "objective": result.objective,
        "feasible": bool(result.feasible),
        "views_transmitted": result.views_transmitted,
        "x": [int(v) for v, on in zip(g.indices(), result.x) if on],
        "y": [[int(k), int(g.indices()[vp])]
              for k, vp in zip(*np.nonzero(result.y))],
        "diagnostics": result.diagnostics,
    }
    if result.deltas is not None:
        d["deltas"] = [dg / g.Q for dg in result.deltas]
    return d


def _cmd_gen(args) -> int:
    grid = ViewGrid(V=args.V, Q=args.Q)
    dist = RequestDistribution(gamma=args.gamma, grid=grid)
    requests = gen_requests(args.K, dist, args.seed)
    budgets = None
    if args.problem == "utility":
        budgets = Budgets(E_bar_b=args.budget_server,
                          E_bar_u=(args.budget_user,) * args.K)
    sc = Scenario(grid=grid, requests=requests,
                  deltas=(args.delta * args.Q,) * args.K,
                  channel=ChannelModel.two_state(), budgets=budgets)
    save_scenario(sc, args.out)
    print(f"wrote {args.out} (K={args.K}, requests={list(requests)})")
    return EXIT_OK


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = DcConfig(multistart=args.multistart, seed=args.seed,
                   rho0=args.rho)
    if args.problem == "energy":
        if args.method == "optimal":
            result = dcsolver.algorithm1_optimal_energy(scenario)
        elif args.method == "dc":
            result = dcsolver.algorithm2_dc_energy(scenario, cfg)
        elif args.method == "server-baseline":
            result = dcsolver.plan_energy_baseline_server(scenario)
        else:
            result = dcsolver.plan_energy_baseline_user(scenario)
    else:
        if args.method == "dc":
            result = dcsolver.algorithm3_dc_utility(scenario, cfg)
        elif args.method == "server-baseline":
            result = dcsolver.plan_utility_baseline_server(scenario)
        else:
            result = dcsolver.plan_utility_baseline_user(scenario)
    payload = _result_payload(result, scenario)
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    if not result.feasible:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_oracle(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.problem == "energy":
        obj, pattern, _ = oracle.oracle_energy(scenario)
        payload = {"objective": obj, "feasible": True,
                   **pattern.to_sparse(scenario.grid)}
    else:
        util, dg, pattern, _ = oracle.oracle_utility(scenario)
        if pattern is None:
            payload = {"objective": 0.0, "feasible": False}
        else:
            payload = {"objective": util, "feasible": True,
                       "deltas": [d / scenario.grid.Q for d in dg],
                       **pattern.to_sparse(scenario.grid)}
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    return EXIT_OK if payload["feasible"] else EXIT_INFEASIBLE


def _cmd_sweep(args) -> int:
    spec = SweepSpec(axis=args.axis,
                     values=tuple(_parse_value(v, args.axis) for v in args.values),
                     reps=args.reps, schemes=tuple(args.schemes),
                     seed=args.seed, problem=args.problem, V=args.V, Q=args.Q,
                     K=args.K, gamma=args.gamma, channel=args.channel,
                     stable_output=args.stable_output,
                     multistart=args.multistart)
    rows = run_sweep(spec, args.out)
    print(f"wrote {args.out}: {len(rows)} rows")
    if args.report:
        emit_report(args.out, args.report)
        print(f"wrote {args.report}")
    return EXIT_OK


def _parse_value(v: str, axis: str):
    return float(v) if axis in ("gamma", "invQ") else int(v)


def _cmd_selftest(args) -> int:
    """Fast internal consistency check: heuristic vs oracle on one instance."""
    sc = Scenario(grid=ViewGrid(V=3, Q=2), requests=(3, 5), deltas=(2, 2))
    obj, _, _ = oracle.oracle_energy(sc)
    opt = dcsolver.algorithm1_optimal_energy(sc)
    dc = dcsolver.algorithm2_dc_energy(sc, DcConfig(multistart=2, seed=0))
    ok = (abs(obj - opt.objective) <= 1e-6 * max(obj, 1e-12)
          and dc.objective >= obj - 1e-9)
    dist = RequestDistribution(gamma=1.0, grid=sc.grid)
    reqs1 = gen_requests(4, dist, 42)
    reqs2 = gen_requests(4, dist, 42)
    ok = ok and reqs1 == reqs2
    print("selftest:", "pass" if ok else "FAIL",
          f"(oracle={obj:.6e}, optimal={opt.objective:.6e}, dc={dc.objective:.6e})")
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvcast",
                                description="Multicast multi-view delivery planner")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a scenario file")
    g.add_argument("--out", required=True)
    g.add_argument("--V", type=int, default=5)
    g.add_argument("--Q", type=int, default=2)
    g.add_argument("--K", type=int, default=4)
    g.add_argument("--gamma", type=float, default=1.0)
    g.add_argument("--delta", type=int, default=1, help="quality in view units")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--problem", choices=("energy", "utility"), default="energy")
    g.add_argument("--budget-server", type=float, default=10e-3)
    g.add_argument("--budget-user", type=float, default=1e-3)
    g.set_defaults(fn=_cmd_gen)

    s = sub.add_parser("solve", help="solve one scenario")
    s.add_argument("problem", choices=("energy", "utility"))
    s.add_argument("--method", required=True,
                   choices=("optimal", "dc", "server-baseline", "user-baseline"))
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--multistart", type=int, default=5)
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--out", default=None)
    s.add_argument("--trace", default=None)
    s.set_defaults(fn=_cmd_solve)

    o = sub.add_parser("oracle", help="brute-force ground truth")
    o.add_argument("problem", choices=("energy", "utility"))
    o.add_argument("--scenario", required=True)
    o.add_argument("--out", default=None)
    o.set_defaults(fn=_cmd_oracle)

    w = sub.add_parser("sweep", help="run an experiment sweep")
    w.add_argument("--axis", required=True, choices=("K", "gamma", "invQ"))
    w.add_argument("--values", nargs="+", required=True)
    w.add_argument("--reps", type=int, default=100)
    w.add_argument("--schemes", nargs="+",
                   default=["dc", "server-baseline", "user-baseline"])
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--problem", choices=("energy", "utility"), default="energy")
    w.add_argument("--V", type=int, default=5)
    w.add_argument("--Q", type=int, default=2)
    w.add_argument("--K", type=int, default=4)
    w.add_argument("--gamma", type=float, default=1.0)
    w.add_argument("--channel", choices=("iid", "correlated"), default="iid")
    w.add_argument("--multistart", type=int, default=3)
    w.add_argument("--stable-output", action="store_true",
                   help="zero the runtime column for byte-identical reruns")
    w.add_argument("--out", required=True)
    w.add_argument("--report", default=None, help="also write an SVG chart")
    w.set_defaults(fn=_cmd_sweep)

    t = sub.add_parser("selftest", help="quick internal consistency check")
    t.set_defaults(fn=_cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except SizeCapError as exc:
        print(f"size cap exceeded: {exc}", file=sys.stderr)
        return EXIT_SIZE_CAP


if __name__ == "__main__":
    sys.exit(main())
