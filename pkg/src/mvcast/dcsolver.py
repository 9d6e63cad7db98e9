"""Top-level planning algorithms.

Exact energy minimization by reduced enumeration, the penalized
difference-of-convex heuristics for energy and for budgeted utility, the
big-constant reformulation of the window constraints, quality-grid
flooring, and rounding/repair of fractional utilization matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import viewsel
from .convexcore import (ConvexSolveConfig, DcEnergyProgram, DcUtilityProgram,
                         TransmitEnergySolver, dual_ascend)
from .errors import ConvergenceError, DomainError, InfeasibleError
from .model import Scenario, energy_objective
from .viewsel import SelectionPattern


@dataclass(frozen=True)
class DcConfig:
    """Knobs for the penalized-DC heuristics."""

    rho0: float | None = None          # auto: 10x the unpenalized objective scale
    rho_growth: float = 10.0
    max_rho_growths: int = 6
    multistart: int = 5
    binarity_tol: float = 1e-6
    round_threshold: float = 0.5
    conv_tol: float = 1e-5
    max_dc_iters: int = 30
    c_big: float | None = None         # auto: V - 1
    seed: int = 0

    def __post_init__(self):
        if self.rho0 is not None and self.rho0 <= 0:
            raise DomainError("initial penalty weight must be positive")
        if self.multistart < 1:
            raise DomainError("need at least one start")


@dataclass
class PlanResult:
    """Outcome of one planning algorithm on one scenario."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    e: np.ndarray
    objective: float
    feasible: bool
    scheme: str
    deltas: tuple[int, ...] | None = None    # grid units; utility plans only
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.t > 0, self.e / np.where(self.t > 0, self.t, 1.0), 0.0)

    @property
    def views_transmitted(self) -> int:
        return int(np.asarray(self.x).sum())


# ---------------------------------------------------------------------------
# Penalty

def penalty(y) -> float:
    """Binarity gap sum y(1-y); zero exactly on binary matrices."""
    y = np.asarray(y, dtype=float)
    if np.any(y < -1e-12) or np.any(y > 1 + 1e-12):
        raise DomainError("penalty input must lie in [0, 1]")
    return float((y * (1.0 - y)).sum())


def penalty_linearized(y, y_prev) -> float:
    """First-order expansion of the penalty at y_prev, evaluated at y."""
    y = np.asarray(y, dtype=float)
    y0 = np.asarray(y_prev, dtype=float)
    if np.any(y < -1e-12) or np.any(y > 1 + 1e-12):
        raise DomainError("penalty input must lie in [0, 1]")
    return float(((1.0 - 2.0 * y0) * y).sum() + (y0 ** 2).sum())


# ---------------------------------------------------------------------------
# Big-constant window constraints and quality flooring

def transform_bigc(scenario: Scenario, c_big: float | None = None):
    """Linear rows equivalent to the selection-window constraints.

    Returns a list of rows; each row is ``(kind, coeffs, rhs)`` with kind
    "eq" or "le", and coeffs a dict over variables ``("y", k, grid_view)``
    and ``("delta", k)`` (quality in view units).
    """
    g = scenario.grid
    c = float(c_big if c_big is not None else g.V - 1)
    if c <= g.V - 2:
        raise DomainError("big constant must exceed V - 2")
    rows = []
    for k, r in enumerate(scenario.requests):
        right = {("y", k, r): 1.0}
        for v in g.indices():
            if v > r:
                right[("y", k, int(v))] = 1.0
        rows.append(("eq", right, 1.0))
        left = {("y", k, r): 1.0}
        for v in g.indices():
            if v < r:
                left[("y", k, int(v))] = 1.0
        rows.append(("eq", left, 1.0))
        for v in g.indices():
            v = int(v)
            if v == r:
                continue
            # |v - r|/Q - delta_k <= c (1 - y_{k,v})
            rows.append(("le",
                         {("y", k, v): c, ("delta", k): -1.0},
                         c - abs(v - r) / g.Q))
    return rows


def bigc_satisfied(y: np.ndarray, deltas_grid, scenario: Scenario,
                   c_big: float | None = None, tol: float = 1e-9) -> bool:
    """Evaluate the big-constant rows on a binary y and grid qualities."""
    g = scenario.grid
    vals = {}
    for k in range(scenario.K):
        vals[("delta", k)] = deltas_grid[k] / g.Q
        for v in g.indices():
            vals[("y", k, int(v))] = float(y[k, g.pos(int(v))])
    for kind, coeffs, rhs in transform_bigc(scenario, c_big):
        lhs = sum(c * vals[var] for var, c in coeffs.items())
        if kind == "eq" and abs(lhs - rhs) > tol:
            return False
        if kind == "le" and lhs > rhs + tol:
            return False
    return True


def floor_delta(deltas_views, grid) -> np.ndarray:
    """Floor continuous qualities (view units) onto the 1/Q quality grid."""
    out = []
    for d in np.asarray(deltas_views, dtype=float):
        if not (1.0 - 1e-9 <= d <= grid.V - 1 + 1e-9):
            raise DomainError(f"quality {d} outside [1, {grid.V - 1}]")
        gsteps = math.floor(d * grid.Q + 1e-9)
        out.append(int(min(max(gsteps, grid.Q), (grid.V - 1) * grid.Q)))
    return np.array(out, dtype=int)


# ---------------------------------------------------------------------------
# Rounding fractional utilization onto feasible rows

def round_and_repair(y_frac: np.ndarray, scenario: Scenario,
                     solver: TransmitEnergySolver | None = None,
                     deltas_grid=None):
    """Project each user's fractional row onto its best feasible support.

    The direct row wins outright at mass >= the rounding threshold;
    otherwise the feasible row (direct or reference pair) with the largest
    fractional mass is chosen, ties preferring direct then lexicographic.
    Returns (SelectionPattern, AllocationSolution).
    """
    solver = solver or TransmitEnergySolver(scenario)
    g = scenario.grid
    deltas = tuple(deltas_grid) if deltas_grid is not None else scenario.deltas
    chosen = []
    for k in range(scenario.K):
        r = scenario.requests[k]
        rows = viewsel.feasible_y_rows(r, deltas[k], g)
        if y_frac[k, g.pos(r)] >= 0.5:
            chosen.append((r,))
            continue
        best = max(
            enumerate(rows),
            key=lambda ir: (sum(y_frac[k, g.pos(v)] for v in ir[1]),
                            len(ir[1]) == 1, -ir[0]),
        )[1]
        chosen.append(best)
    pattern = viewsel.rows_to_pattern(tuple(chosen), scenario)
    alloc = solver.solve_for_y(pattern.y)
    return pattern, alloc


# ---------------------------------------------------------------------------
# Shared evaluation helpers

def _plan_from_pattern(pattern: SelectionPattern, scenario: Scenario,
                       solver: TransmitEnergySolver, scheme: str,
                       diagnostics=None) -> PlanResult:
    alloc = solver.solve_for_y(pattern.y)
    obj = energy_objective(pattern.x, pattern.y, alloc.e, scenario, solver.probs)
    return PlanResult(x=pattern.x, y=pattern.y, t=alloc.t, e=alloc.e,
                      objective=obj, feasible=True, scheme=scheme,
                      diagnostics=diagnostics or {"iterations": alloc.iterations})


def plan_energy_baseline_server(scenario: Scenario,
                                solver: TransmitEnergySolver | None = None) -> PlanResult:
    solver = solver or TransmitEnergySolver(scenario)
    return _plan_from_pattern(viewsel.baseline_server(scenario), scenario,
                              solver, "server-baseline")


def plan_energy_baseline_user(scenario: Scenario,
                              solver: TransmitEnergySolver | None = None) -> PlanResult:
    solver = solver or TransmitEnergySolver(scenario)
    return _plan_from_pattern(viewsel.baseline_user_pattern(scenario), scenario,
                              solver, "user-baseline")


# ---------------------------------------------------------------------------
# Exact energy minimization

def algorithm1_optimal_energy(scenario: Scenario,
                              cfg: DcConfig | None = None,
                              convex_cfg: ConvexSolveConfig | None = None,
                              allocator: str = "direct",
                              enumeration_cap: int = 1_000_000) -> PlanResult:
    """Exact minimum-energy plan by enumeration over the reduced space.

    Falls back to full enumeration when the support-reduction hypotheses
    fail.  Each candidate's transmission energy comes from the direct
    convex allocator (or dual ascent when ``allocator='dual'``).
    """
    solver = TransmitEnergySolver(scenario, convex_cfg)
    if viewsel.reduction_applies(scenario):
        candidates = viewsel.enumerate_reduced(scenario, cap=enumeration_cap)
    else:
        candidates = viewsel.enumerate_full_y(scenario, cap=enumeration_cap)
    best = None
    count = 0
    for pattern in candidates:
        count += 1
        transmit = solver.transmit_energy(pattern.y)
        obj = transmit + _synthesis_cost(pattern, scenario)
        key = (obj, pattern.transmitted_count(),
               tuple(pattern.x.tolist()), tuple(pattern.y.ravel().tolist()))
        if best is None or key < best[0]:
            best = (key, pattern)
    if best is None:
        raise DomainError("empty candidate space")
    pattern = best[1]
    if allocator == "dual":
        _, alloc, _ = dual_ascend(pattern.y, scenario,
                                  convex_cfg or ConvexSolveConfig(), solver=solver)
    else:
        alloc = solver.solve_for_y(pattern.y)
    obj = energy_objective(pattern.x, pattern.y, alloc.e, scenario, solver.probs)
    return PlanResult(x=pattern.x, y=pattern.y, t=alloc.t, e=alloc.e,
                      objective=obj, feasible=True, scheme="optimal",
                      diagnostics={"candidates": count,
                                   "iterations": alloc.iterations})


def _synthesis_cost(pattern: SelectionPattern, scenario: Scenario) -> float:
    g = scenario.grid
    cost = scenario.params.E_b * float(pattern.x[~g.original_mask()].sum())
    for k, r in enumerate(scenario.requests):
        cost += scenario.params.beta * scenario.E_u[k] * (1 - int(pattern.y[k, g.pos(r)]))
    return cost


# ---------------------------------------------------------------------------
# Penalized-DC energy heuristic

def _random_feasible_rows(scenario: Scenario, rng, deltas=None):
    g = scenario.grid
    deltas = deltas if deltas is not None else scenario.deltas
    rows = []
    for k in range(scenario.K):
        options = viewsel.feasible_y_rows(scenario.requests[k], deltas[k], g)
        rows.append(options[rng.integers(len(options))])
    return tuple(rows)


def _dc_descend(prog, y_start, rho0, cfg: DcConfig, sense: float = 1.0):
    """Run the linearized-penalty loop with penalty growth.

    ``sense`` is +1 when the program's reported objective is minimized
    (energy) and -1 when it is maximized (utility).  Returns
    (y, final iterate outputs, penalty value, rho, iteration count).
    """
    y = np.asarray(y_start, dtype=float)
    rho = rho0
    last = None
    iters = 0
    for _ in range(cfg.max_rho_growths + 1):
        prev_f = None
        for _ in range(cfg.max_dc_iters):
            out = prog.iterate(y, rho)
            iters += 1
            y = out[0]
            f = sense * out[-2] + rho * penalty(np.clip(y, 0, 1))
            last = out
            if prev_f is not None and abs(prev_f - f) <= cfg.conv_tol * max(1.0, abs(f)):
                break
            prev_f = f
        if penalty(np.clip(y, 0, 1)) <= cfg.binarity_tol:
            break
        rho *= cfg.rho_growth
    return y, last, penalty(np.clip(y, 0, 1)), rho, iters


def algorithm2_dc_energy(scenario: Scenario,
                         cfg: DcConfig | None = None,
                         convex_cfg: ConvexSolveConfig | None = None) -> PlanResult:
    """Penalized-DC energy heuristic with baseline-seeded multistart.

    Both baseline patterns are retained as candidates, so the result never
    exceeds either baseline's objective.
    """
    cfg = cfg or DcConfig()
    solver = TransmitEnergySolver(scenario, convex_cfg)
    prog = DcEnergyProgram(scenario, convex_cfg)
    rng = np.random.default_rng(cfg.seed)

    base_server = viewsel.baseline_server(scenario)
    base_user = viewsel.baseline_user_pattern(scenario)
    starts = [base_server.y.astype(float), base_user.y.astype(float)]
    for _ in range(cfg.multistart):
        starts.append(viewsel.rows_to_pattern(
            _random_feasible_rows(scenario, rng), scenario).y.astype(float))

    scale = max(_plan_from_pattern(base_server, scenario, solver,
                                   "seed").objective, 1e-9)
    rho0 = cfg.rho0 if cfg.rho0 is not None else 10.0 * scale

    candidates = []
    total_iters = 0
    for idx, y0 in enumerate(starts):
        y_exit, _, pen, rho, iters = _dc_descend(prog, y0, rho0, cfg)
        total_iters += iters
        # rounding/repair is safe for any fractional exit point, so starts
        # that miss the binarity tolerance still yield valid candidates
        pattern, alloc = round_and_repair(y_exit, scenario, solver)
        obj = energy_objective(pattern.x, pattern.y, alloc.e, scenario, solver.probs)
        candidates.append((obj, idx, pattern, alloc, pen, rho))
    for idx, pat in ((len(starts), base_server), (len(starts) + 1, base_user)):
        alloc = solver.solve_for_y(pat.y)
        obj = energy_objective(pat.x, pat.y, alloc.e, scenario, solver.probs)
        candidates.append((obj, idx, pat, alloc, 0.0, rho0))

    obj, idx, pattern, alloc, pen, rho = min(candidates, key=lambda c: (c[0], c[1]))
    return PlanResult(x=pattern.x, y=pattern.y, t=alloc.t, e=alloc.e,
                      objective=obj, feasible=True, scheme="dc",
                      diagnostics={"starts": len(starts), "winner": idx,
                                   "penalty_exit": pen, "rho_exit": rho,
                                   "iterations": total_iters})


# ---------------------------------------------------------------------------
# Penalized-DC utility heuristic

def _utility_candidate(y_frac, deltas_views, scenario, solver, tol=1e-9):
    """Round, floor, and budget-check one utility exit point.

    Returns (utility, deltas_grid, pattern, alloc) or None when the
    rounded plan violates a budget.
    """
    from .oracle import budget_feasible

    g = scenario.grid
    deltas_grid = floor_delta(deltas_views, g)
    pattern, alloc = round_and_repair(y_frac, scenario, solver,
                                      deltas_grid=tuple(deltas_grid))
    server_cost = alloc.objective + scenario.params.E_b * float(
        pattern.x[~g.original_mask()].sum())
    if not budget_feasible(server_cost, pattern.y, scenario):
        return None
    util = sum(scenario.utility.value(d / g.Q, g.V) for d in deltas_grid)
    return util, tuple(int(d) for d in deltas_grid), pattern, alloc


def algorithm3_dc_utility(scenario: Scenario,
                          cfg: DcConfig | None = None,
                          convex_cfg: ConvexSolveConfig | None = None) -> PlanResult:
    """Penalized-DC utility heuristic under server/user energy budgets.

    Qualities relax to a continuous box inside the loop and are floored to
    the quality grid at exit.  When every start is infeasible the plan
    reports utility 0 with ``feasible=False``.
    """
    if scenario.budgets is None:
        raise DomainError("utility planning needs energy budgets")
    cfg = cfg or DcConfig()
    solver = TransmitEnergySolver(scenario, convex_cfg)
    g = scenario.grid
    K = scenario.K

    prog = DcUtilityProgram(scenario, convex_cfg, c_big=cfg.c_big)
    rng = np.random.default_rng(cfg.seed)

    starts = [viewsel.baseline_server(scenario).y.astype(float),
              viewsel.baseline_user_pattern(scenario).y.astype(float)]
    for _ in range(cfg.multistart):
        dg = rng.integers(g.Q, (g.V - 1) * g.Q + 1, size=K)
        starts.append(viewsel.rows_to_pattern(
            _random_feasible_rows(scenario, rng, deltas=tuple(int(d) for d in dg)),
            scenario).y.astype(float))

    rho0 = cfg.rho0 if cfg.rho0 is not None else 10.0 * K * (g.V - 1)
    best = None
    infeasible_program = False
    for idx, y0 in enumerate(starts):
        try:
            y_exit, last, pen, rho, _ = _dc_descend(prog, y0, rho0, cfg, sense=-1.0)
        except InfeasibleError:
            infeasible_program = True
            break
        except ConvergenceError:
            # near-degenerate budgets can stall the interior-point solve
            # without an infeasibility certificate; try the other starts
            continue
        deltas_views = last[1]
        cand = _utility_candidate(y_exit, deltas_views, scenario, solver)
        if cand is not None:
            util, dg, pattern, alloc = cand
            key = (-util, idx)
            if best is None or key < best[0]:
                best = (key, util, dg, pattern, alloc, pen, rho)

    # baseline patterns at minimum quality distance double as candidates
    if not infeasible_program:
        for idx, pat in enumerate([viewsel.baseline_server(scenario),
                                   viewsel.baseline_user_pattern(scenario)]):
            cand = _utility_candidate(pat.y.astype(float), np.ones(K), scenario, solver)
            if cand is not None:
                util, dg, pattern, alloc = cand
                key = (-util, len(starts) + idx)
                if best is None or key < best[0]:
                    best = (key, util, dg, pattern, alloc, 0.0, rho0)

    if best is None:
        S = len(solver.states)
        zero = np.zeros((S, g.size))
        return PlanResult(x=np.zeros(g.size, dtype=np.int8),
                          y=np.zeros((K, g.size), dtype=np.int8),
                          t=zero, e=zero, objective=0.0, feasible=False,
                          scheme="dc", deltas=None,
                          diagnostics={"starts": len(starts)})
    _, util, dg, pattern, alloc, pen, rho = best
    return PlanResult(x=pattern.x, y=pattern.y, t=alloc.t, e=alloc.e,
                      objective=util, feasible=True, scheme="dc",
                      deltas=dg,
                      diagnostics={"starts": len(starts), "penalty_exit": pen,
                                   "rho_exit": rho})


def _utility_fixed_pattern(scenario: Scenario, pattern: SelectionPattern,
                           solver: TransmitEnergySolver, scheme: str) -> PlanResult:
    """Utility of a fixed mechanism at minimum quality distance."""
    cand = _utility_candidate(pattern.y.astype(float), np.ones(scenario.K),
                              scenario, solver)
    g = scenario.grid
    if cand is None:
        S = len(solver.states)
        zero = np.zeros((S, g.size))
        return PlanResult(x=np.zeros(g.size, dtype=np.int8),
                          y=np.zeros((scenario.K, g.size), dtype=np.int8),
                          t=zero, e=zero, objective=0.0, feasible=False,
                          scheme=scheme, deltas=None)
    util, dg, pattern, alloc = cand
    return PlanResult(x=pattern.x, y=pattern.y, t=alloc.t, e=alloc.e,
                      objective=util, feasible=True, scheme=scheme, deltas=dg)


def plan_utility_baseline_server(scenario: Scenario,
                                 solver: TransmitEnergySolver | None = None) -> PlanResult:
    solver = solver or TransmitEnergySolver(scenario)
    return _utility_fixed_pattern(scenario, viewsel.baseline_server(scenario),
                                  solver, "server-baseline")


def plan_utility_baseline_user(scenario: Scenario,
                               solver: TransmitEnergySolver | None = None) -> PlanResult:
    solver = solver or TransmitEnergySolver(scenario)
    return _utility_fixed_pattern(scenario, viewsel.baseline_user_pattern(scenario),
                                  solver, "user-baseline")
