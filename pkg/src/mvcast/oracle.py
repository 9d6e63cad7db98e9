"""Brute-force ground truth for tiny instances.

Exhaustive search over binary selections (and quality-grid combinations
for the budgeted utility problem), with every candidate priced by the
direct convex allocator.  Deliberately shares no solver path with the
dual-decomposition machinery so cross-checks are independent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import viewsel
from .convexcore import ConvexSolveConfig, TransmitEnergySolver, dual_value
from .errors import DomainError, SizeCapError
from .model import Scenario
from .viewsel import SelectionPattern


@dataclass(frozen=True)
class OracleBudget:
    """Hard caps keeping exhaustive searches at desk scale."""

    max_candidates: int = 1_000_000
    max_states: int = 256

    def __post_init__(self):
        if self.max_candidates <= 0 or self.max_states <= 0:
            raise DomainError("oracle caps must be positive")


def _server_synthesis(x: np.ndarray, scenario: Scenario) -> float:
    g = scenario.grid
    return scenario.params.E_b * float(np.asarray(x)[~g.original_mask()].sum())


def _user_synthesis(y: np.ndarray, scenario: Scenario) -> float:
    g = scenario.grid
    return sum(
        scenario.params.beta * scenario.E_u[k]
        * (1 - int(y[k, g.pos(scenario.requests[k])]))
        for k in range(scenario.K)
    )


def budget_feasible(server_cost: float, y: np.ndarray, scenario: Scenario,
                    rtol: float = 1e-6, atol: float = 1e-15) -> bool:
    """Shared budget rule so heuristic and oracle accept identical plans."""
    b = scenario.budgets
    if b is None:
        raise DomainError("budget check needs energy budgets")
    if server_cost > b.E_bar_b * (1 + rtol) + atol:
        return False
    g = scenario.grid
    for k in range(scenario.K):
        direct = int(y[k, g.pos(scenario.requests[k])])
        if scenario.E_u[k] * (1 - direct) > b.E_bar_u[k] + atol:
            return False
    return True


def _x_supersets(y: np.ndarray, scenario: Scenario):
    """All transmit vectors covering y; extras only among original views.

    Non-original extras are strictly dominated whenever server synthesis
    costs anything, and tie-breaking would discard them anyway; original
    extras are enumerated so ties are resolved honestly.
    """
    g = scenario.grid
    base = np.asarray(y).max(axis=0).astype(np.int8)
    free = [i for i in range(g.size) if g.original_mask()[i] and not base[i]]
    for extra in itertools.chain.from_iterable(
            itertools.combinations(free, n) for n in range(len(free) + 1)):
        x = base.copy()
        for i in extra:
            x[i] = 1
        yield x


def oracle_energy(scenario: Scenario,
                  budget: OracleBudget | None = None,
                  use_reduction: bool = False,
                  cfg: ConvexSolveConfig | None = None,
                  solver: TransmitEnergySolver | None = None):
    """Exact minimum weighted energy over all feasible binary plans.

    Returns (E*, SelectionPattern, AllocationSolution).  Deterministic
    tie-break: objective, then transmitted-view count, then lexicographic
    (x, y).
    """
    budget = budget or OracleBudget()
    solver = solver or TransmitEnergySolver(scenario, cfg)
    if len(solver.states) > budget.max_states:
        raise SizeCapError("joint state space exceeds oracle budget")
    if use_reduction:
        candidates = viewsel.enumerate_reduced(scenario, cap=budget.max_candidates)
    else:
        candidates = viewsel.enumerate_full_y(scenario, cap=budget.max_candidates)
    best = None
    seen = 0
    for pattern in candidates:
        transmit = solver.transmit_energy(pattern.y)
        user_cost = _user_synthesis(pattern.y, scenario)
        for x in _x_supersets(pattern.y, scenario):
            seen += 1
            if seen > budget.max_candidates:
                raise SizeCapError("candidate count exceeds oracle budget")
            obj = transmit + _server_synthesis(x, scenario) + user_cost
            key = (obj, int(x.sum()), tuple(x.tolist()),
                   tuple(pattern.y.ravel().tolist()))
            if best is None or key < best[0]:
                best = (key, SelectionPattern(x=x, y=pattern.y))
    key, pattern = best
    alloc = solver.solve_for_y(pattern.y)
    return key[0], pattern, alloc


def oracle_utility(scenario: Scenario,
                   budget: OracleBudget | None = None,
                   cfg: ConvexSolveConfig | None = None,
                   solver: TransmitEnergySolver | None = None):
    """Exact maximum total utility under the energy budgets.

    Returns (U*, deltas in grid units, SelectionPattern, AllocationSolution)
    or (0.0, None, None, None) when no quality/selection combination fits
    the budgets.
    """
    if scenario.budgets is None:
        raise DomainError("utility oracle needs energy budgets")
    budget = budget or OracleBudget()
    solver = solver or TransmitEnergySolver(scenario, cfg)
    if len(solver.states) > budget.max_states:
        raise SizeCapError("joint state space exceeds oracle budget")
    g = scenario.grid
    delta_axis = range(g.Q, (g.V - 1) * g.Q + 1)
    combos = []
    for dg in itertools.product(delta_axis, repeat=scenario.K):
        util = sum(scenario.utility.value(d / g.Q, g.V) for d in dg)
        combos.append((-util, dg))
    combos.sort()
    best = None
    best_key = None
    seen = 0
    for neg_util, dg in combos:
        if best is not None and -neg_util < best[0] - 1e-12:
            break  # remaining combos cannot beat the incumbent utility
        trial = scenario.with_requests(scenario.requests, deltas=dg)
        for pattern in viewsel.enumerate_full_y(trial, cap=budget.max_candidates):
            seen += 1
            if seen > budget.max_candidates:
                raise SizeCapError("candidate count exceeds oracle budget")
            transmit = solver.transmit_energy(pattern.y)
            server_cost = transmit + _server_synthesis(pattern.x, scenario)
            if not budget_feasible(server_cost, pattern.y, scenario):
                continue
            key = (neg_util, dg, server_cost, tuple(pattern.y.ravel().tolist()))
            if best_key is None or key < best_key:
                best_key = key
                best = (-neg_util, dg, pattern)
    if best is None:
        return 0.0, None, None, None
    util, dg, pattern = best
    alloc = solver.solve_for_y(pattern.y)
    return util, tuple(int(d) for d in dg), pattern, alloc


def oracle_dual_check(y: np.ndarray, lam: np.ndarray, scenario: Scenario,
                      cfg: ConvexSolveConfig | None = None) -> dict:
    """Weak-duality report: dual value vs direct objective for fixed y."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("multipliers must be nonnegative")
    solver = TransmitEnergySolver(scenario, cfg)
    direct = solver.solve_for_y(np.asarray(y))
    dual = dual_value(np.asarray(y), lam, scenario, states=solver.states)
    gap = direct.objective - dual
    return {
        "dual": dual,
        "primal": direct.objective,
        "gap": gap,
        "weak_duality_holds": dual <= direct.objective + 1e-9,
        "relative_gap": gap / max(direct.objective, 1e-300),
    }
