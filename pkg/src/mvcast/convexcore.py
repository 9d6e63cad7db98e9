"""Continuous convex machinery.

Everything that solves a convex program lives here: the direct
transmission-time/energy allocator for a fixed utilization matrix, the
per-state dual subproblems with subgradient ascent on the rate
multipliers, and the two linearized penalty programs used by the
iterative heuristics (energy form and budgeted utility form).

Programs are assembled as sparse conic problems (linear equalities,
nonnegativity rows, exponential cones for the perspective-log rate
constraint) and handed to the Clarabel interior-point solver.  The rate
constraint

    (B/T) * sum_h q_h * t_{h,v} * log2(1 + e_{h,v} h_k / (t_{h,v} n0)) >= R*y

is encoded with one auxiliary variable w per (state, user, view) through
the exponential cone (w, t, t + e*h/n0), which enforces
w <= t * ln(1 + e*h/(t*n0)), plus the linear row
sum_h q_h w_{h,k,v} >= kappa * y with kappa = R*T*ln2/B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import clarabel
import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, InfeasibleError
from .model import Scenario, rate_phi

_OK_STATUSES = ("Solved", "AlmostSolved")
_INFEASIBLE_STATUSES = ("PrimalInfeasible", "AlmostPrimalInfeasible")


@dataclass(frozen=True)
class ConvexSolveConfig:
    """Tolerances and iteration budgets for the convex solvers."""

    feas_tol: float = 1e-6
    kkt_tol: float = 1e-6
    obj_tol: float = 1e-8
    max_iters: int = 200
    dual_max_iters: int = 5000
    dual_gap_tol: float = 1e-3
    dual_check_every: int = 50
    dual_step_scale: float = 1.0
    dual_step_offset: float = 25.0
    state_cap: int = 4096
    seed: int = 0

    def __post_init__(self):
        for name in ("feas_tol", "kkt_tol", "obj_tol", "dual_gap_tol"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")


@dataclass(frozen=True)
class AllocationSolution:
    """Per-(joint state, view) time/energy allocation with diagnostics."""

    t: np.ndarray
    e: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int

    @property
    def p(self) -> np.ndarray:
        """Transmit power e/t, 0 where no time is allocated."""
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(self.t > 0, self.e / np.where(self.t > 0, self.t, 1.0), 0.0)
        return out


@dataclass
class DualState:
    """Rate-constraint multipliers with subgradient bookkeeping."""

    lam: np.ndarray
    n: int = 0
    eta0: np.ndarray | None = None
    offset: float = 25.0
    t_bar: np.ndarray | None = None
    e_bar: np.ndarray | None = None

    def step_size(self) -> np.ndarray:
        return self.eta0 / (1.0 + self.n / self.offset)


# ---------------------------------------------------------------------------
# Generic conic assembly

class ConeProgram:
    """Sparse conic program: min q'x  s.t.  Ax + s = b, s in K.

    Rows are appended as equalities (zero cone), one-sided inequalities
    (nonnegative cone, a.x <= rhs) and exponential-cone triples.  The
    structure is assembled once; re-solves with a new objective vector
    reuse the cached matrices.
    """

    def __init__(self, nvar: int):
        self.nvar = nvar
        self._eq: list[tuple[dict, float]] = []
        self._ineq: list[tuple[dict, float]] = []
        self._exp: list[tuple[dict, float]] = []
        self._mat = None

    def add_eq(self, coeffs: dict, rhs: float = 0.0):
        self._eq.append((coeffs, rhs))

    def add_ineq(self, coeffs: dict, rhs: float = 0.0):
        """Row sum_j coeffs[j] * x_j <= rhs."""
        self._ineq.append((coeffs, rhs))

    def add_exp(self, triple):
        """Exponential-cone membership of (expr1, expr2, expr3).

        Each expr is (coeffs, const) meaning const + coeffs.x; the cone
        requires expr2 * exp(expr1/expr2) <= expr3.
        """
        for coeffs, const in triple:
            self._exp.append((coeffs, const))

    def _assemble(self):
        rows = self._eq + self._ineq + self._exp
        data, ri, ci = [], [], []
        b = np.zeros(len(rows))
        for i, (coeffs, rhs) in enumerate(rows):
            if i < len(self._eq) + len(self._ineq):
                for j, c in coeffs.items():
                    data.append(c)
                    ri.append(i)
                    ci.append(j)
                b[i] = rhs
            else:
                # cone slack s = const + coeffs.x, so A row = -coeffs, b = const
                for j, c in coeffs.items():
                    data.append(-c)
                    ri.append(i)
                    ci.append(j)
                b[i] = rhs
        A = sp.csc_matrix((data, (ri, ci)), shape=(len(rows), self.nvar))
        P = sp.csc_matrix((self.nvar, self.nvar))
        cones = []
        if self._eq:
            cones.append(clarabel.ZeroConeT(len(self._eq)))
        if self._ineq:
            cones.append(clarabel.NonnegativeConeT(len(self._ineq)))
        cones.extend(clarabel.ExponentialConeT() for _ in range(len(self._exp) // 3))
        self._mat = (P, A, b, cones)

    def solve(self, q: np.ndarray, cfg: ConvexSolveConfig):
        """Returns (x, status string, iteration count)."""
        if self._mat is None:
            self._assemble()
        P, A, b, cones = self._mat
        st = clarabel.DefaultSettings()
        st.verbose = False
        st.max_iter = cfg.max_iters
        solver = clarabel.DefaultSolver(P, np.asarray(q, dtype=float), A, b, cones, st)
        sol = solver.solve()
        status = str(sol.status)
        if status in _INFEASIBLE_STATUSES:
            raise InfeasibleError(f"conic program infeasible ({status})")
        if status not in _OK_STATUSES:
            raise ConvergenceError(f"conic solve failed with status {status}")
        return np.asarray(sol.x), status, int(sol.iterations)


def _kappa(scenario: Scenario) -> float:
    p = scenario.params
    return p.R * p.T * math.log(2.0) / p.B


# ---------------------------------------------------------------------------
# Direct time/energy allocation for fixed y

class TransmitEnergySolver:
    """Minimal expected transmission energy for a fixed utilization matrix.

    Solutions are cached by the demand structure (view, per-state gain
    profile of the binding users), so repeated solves across enumeration
    share work.
    """

    def __init__(self, scenario: Scenario, cfg: ConvexSolveConfig | None = None):
        self.scenario = scenario
        self.cfg = cfg or ConvexSolveConfig()
        self.states = scenario.joint_states(cap=self.cfg.state_cap)
        self.probs = np.array([p for _, p in self.states])
        self._cache: dict = {}

    def _demands_from_y(self, y: np.ndarray):
        """Deduplicated demands: (view position, per-state gain tuple)."""
        demands = set()
        for k, vp in zip(*np.nonzero(np.asarray(y))):
            gains = tuple(h[k] for h, _ in self.states)
            demands.add((int(vp), gains))
        return frozenset(demands)

    def _solve_demands(self, demands: frozenset):
        if demands in self._cache:
            return self._cache[demands]
        S = len(self.states)
        G = self.scenario.grid.size
        if not demands:
            out = (0.0, np.zeros((S, G)), np.zeros((S, G)), 0)
            self._cache[demands] = out
            return out
        dl = sorted(demands)
        views = sorted({vp for vp, _ in dl})
        vix = {vp: i for i, vp in enumerate(views)}
        nv = len(views)
        p = self.scenario.params
        kap = _kappa(self.scenario)

        # variable layout: t (S*nv), e (S*nv), w (S*len(dl))
        n_t, n_e = S * nv, S * nv
        t0, e0, w0 = 0, n_t, n_t + n_e
        prog = ConeProgram(n_t + n_e + S * len(dl))
        ti = lambda s, i: t0 + s * nv + i
        ei = lambda s, i: e0 + s * nv + i
        wi = lambda s, j: w0 + s * len(dl) + j
        for s in range(S):
            for i in range(nv):
                prog.add_ineq({ti(s, i): -1.0})
                prog.add_ineq({ei(s, i): -1.0})
            prog.add_ineq({ti(s, i): 1.0 for i in range(nv)}, p.T)
        for j, (vp, gains) in enumerate(dl):
            prog.add_ineq({wi(s, j): -self.probs[s] for s in range(S)}, -kap)
            for s in range(S):
                i = vix[vp]
                prog.add_exp((
                    ({wi(s, j): 1.0}, 0.0),
                    ({ti(s, i): 1.0}, 0.0),
                    ({ti(s, i): 1.0, ei(s, i): gains[s] / p.n0}, 0.0),
                ))
        q = np.zeros(prog.nvar)
        for s in range(S):
            for i in range(nv):
                q[ei(s, i)] = self.probs[s]
        x, _, iters = prog.solve(q, self.cfg)
        t = np.zeros((S, G))
        e = np.zeros((S, G))
        for s in range(S):
            for vp, i in vix.items():
                t[s, vp] = max(x[ti(s, i)], 0.0)
                e[s, vp] = max(x[ei(s, i)], 0.0)
        obj = float(self.probs @ e.sum(axis=1))
        out = (obj, t, e, iters)
        self._cache[demands] = out
        return out

    def transmit_energy(self, y: np.ndarray) -> float:
        """Cached optimal expected transmission energy for utilization y."""
        return self._solve_demands(self._demands_from_y(y))[0]

    def solve_for_y(self, y: np.ndarray,
                    restrict_views=None) -> AllocationSolution:
        """Full allocation solution; optionally zero out non-listed views."""
        y = np.asarray(y)
        demands = self._demands_from_y(y)
        if restrict_views is not None:
            allowed = set(restrict_views) | {vp for vp, _ in demands}
            demands = frozenset(d for d in demands if d[0] in allowed)
        obj, t, e, iters = self._solve_demands(demands)
        resid = self._feas_residual(y, t, e)
        return AllocationSolution(t=t, e=e, objective=obj,
                                  kkt_residual=resid, iterations=iters)

    def _feas_residual(self, y, t, e) -> float:
        p = self.scenario.params
        resid = 0.0
        for s, (_, _) in enumerate(self.states):
            resid = max(resid, (t[s].sum() - p.T) / p.T)
        for k, vp in zip(*np.nonzero(y)):
            rate = sum(
                prob * rate_phi(t[s, vp], e[s, vp], h[k], p)
                for s, (h, prob) in enumerate(self.states)
            )
            resid = max(resid, (p.R - rate) / p.R)
        return max(resid, 0.0)


def solve_time_energy_direct(y: np.ndarray, scenario: Scenario,
                             cfg: ConvexSolveConfig | None = None,
                             solver: TransmitEnergySolver | None = None,
                             restrict_views=None) -> AllocationSolution:
    solver = solver or TransmitEnergySolver(scenario, cfg)
    return solver.solve_for_y(y, restrict_views=restrict_views)


# ---------------------------------------------------------------------------
# Dual decomposition of the allocation problem

def _per_view_gain_cost(lam_v: np.ndarray, h: tuple, scenario: Scenario) -> tuple[float, float]:
    """min_u [u - (B/T) sum_k lam_{k} log2(1 + u h_k/n0)] and its argmin.

    This is the per-view reduced cost after the e = u*t substitution; the
    stationarity condition is monotone in u so a bracketed root-find is
    exact.
    """
    p = scenario.params
    act = [(lam_v[k], h[k]) for k in range(len(h)) if lam_v[k] > 0.0]
    if not act:
        return 0.0, 0.0
    coef = p.B / (p.T * math.log(2.0))

    def slope(u):
        # derivative of the reward term; cost is stationary when this hits 1
        return coef * sum(l * hk / (p.n0 + u * hk) for l, hk in act)

    if slope(0.0) <= 1.0:
        return 0.0, 0.0
    hi = 1.0
    while slope(hi) > 1.0:
        hi *= 10.0
        if hi > 1e30:
            break
    u = brentq(lambda x: slope(x) - 1.0, 0.0, hi, xtol=1e-300, rtol=1e-14)
    val = u - (p.B / p.T) * sum(l * math.log2(1.0 + u * hk / p.n0) for l, hk in act)
    return val, u


def dual_subproblem(h: tuple, y: np.ndarray, lam: np.ndarray,
                    scenario: Scenario):
    """Exact per-state minimizer of the relaxed allocation problem.

    Returns (state dual value, per-view time row, per-view energy row).
    Time is winner-take-all: the full slot goes to the view with the most
    negative reduced cost (lowest view index on ties), or nowhere.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("multipliers must be nonnegative")
    p = scenario.params
    G = scenario.grid.size
    t = np.zeros(G)
    e = np.zeros(G)
    const = p.R * float((lam * np.asarray(y)).sum())
    best_c, best_v, best_u = 0.0, None, 0.0
    for vp in range(G):
        if not np.any(lam[:, vp] > 0):
            continue
        c, u = _per_view_gain_cost(lam[:, vp], h, scenario)
        if c < best_c:  # ascending scan keeps the lowest view index on ties
            best_c, best_v, best_u = c, vp, u
    if best_v is not None and best_c < 0:
        t[best_v] = p.T
        e[best_v] = best_u * p.T
    return const + p.T * min(0.0, best_c), t, e


def dual_value(y: np.ndarray, lam: np.ndarray, scenario: Scenario,
               states=None) -> float:
    """Exact dual function value: expectation of per-state subproblem values."""
    states = states if states is not None else scenario.joint_states()
    return sum(prob * dual_subproblem(h, y, lam, scenario)[0]
               for h, prob in states)


def _lam_init(y: np.ndarray, scenario: Scenario, states) -> np.ndarray:
    """Scale-matched multiplier start: marginal energy per bit of rate.

    For a single user/view/state the optimal multiplier is
    T ln2 n0 2^{R/B} / (B h); the mean gain per user anchors the scale.
    """
    p = scenario.params
    K, G = y.shape
    lam = np.zeros((K, G))
    hbar = np.zeros(K)
    for h, prob in states:
        hbar += prob * np.asarray(h)
    for k, vp in zip(*np.nonzero(y)):
        lam[k, vp] = p.T * math.log(2.0) * p.n0 * 2.0 ** (p.R / p.B) / (p.B * hbar[k])
    return lam


def dual_ascend(y: np.ndarray, scenario: Scenario,
                cfg: ConvexSolveConfig | None = None,
                solver: TransmitEnergySolver | None = None):
    """Projected subgradient ascent on the rate multipliers.

    Returns (DualState, repaired AllocationSolution, best dual value).
    Ergodic (running-average) primals decide which views enter the final
    repair solve; the repair itself is one direct convex solve.
    """
    cfg = cfg or ConvexSolveConfig()
    solver = solver or TransmitEnergySolver(scenario, cfg)
    y = np.asarray(y)
    states = solver.states
    p = scenario.params
    K, G = y.shape

    if not y.any():
        lam = np.zeros((K, G))
        alloc = solver.solve_for_y(y)
        return DualState(lam=lam), alloc, 0.0

    lam = _lam_init(y, scenario, states)
    eta0 = cfg.dual_step_scale * lam / max(p.R, 1.0)
    state = DualState(lam=lam, eta0=eta0, offset=cfg.dual_step_offset,
                      t_bar=np.zeros((len(states), G)),
                      e_bar=np.zeros((len(states), G)))
    best_dual = -math.inf
    best_lam = lam.copy()
    primal_ref = None

    for n in range(cfg.dual_max_iters):
        dval = 0.0
        sub = (y * p.R).astype(float)
        for s, (h, prob) in enumerate(states):
            v, t_h, e_h = dual_subproblem(h, y, state.lam, scenario)
            dval += prob * v
            state.t_bar[s] += (t_h - state.t_bar[s]) / (n + 1)
            state.e_bar[s] += (e_h - state.e_bar[s]) / (n + 1)
            for k, vp in zip(*np.nonzero(y)):
                sub[k, vp] -= prob * rate_phi(t_h[vp], e_h[vp], h[k], p)
        if dval > best_dual:
            best_dual = dval
            best_lam = state.lam.copy()
        state.lam = np.maximum(state.lam + state.step_size() * sub * y, 0.0)
        state.n = n + 1
        if (n + 1) % cfg.dual_check_every == 0:
            if primal_ref is None:
                primal_ref = _repair_from_averages(y, state, solver)
            gap = abs(best_dual - primal_ref.objective) / max(primal_ref.objective, 1e-300)
            if gap <= cfg.dual_gap_tol:
                state.lam = best_lam
                return state, primal_ref, best_dual

    if primal_ref is None:
        primal_ref = _repair_from_averages(y, state, solver)
    gap = abs(best_dual - primal_ref.objective) / max(primal_ref.objective, 1e-300)
    if gap <= cfg.dual_gap_tol:
        state.lam = best_lam
        return state, primal_ref, best_dual
    raise ConvergenceError(
        f"dual ascent gap {gap:.3e} above tolerance after {cfg.dual_max_iters} iterations",
        best_dual=best_dual, best_primal=primal_ref.objective)


def _repair_from_averages(y, state: DualState, solver: TransmitEnergySolver):
    active = set(np.nonzero(state.t_bar.sum(axis=0) > 0)[0].tolist())
    return solver.solve_for_y(y, restrict_views=active)


# ---------------------------------------------------------------------------
# Linearized-penalty convex programs

class DcEnergyProgram:
    """Energy-minimizing convex step with a linearized binarity penalty.

    The conic structure (selection rows, rate cones, time budgets) is
    assembled once per scenario; each iteration only rewrites the
    objective vector for the current penalty linearization point.
    """

    def __init__(self, scenario: Scenario, cfg: ConvexSolveConfig | None = None):
        from . import viewsel

        self.scenario = scenario
        self.cfg = cfg or ConvexSolveConfig()
        self.states = scenario.joint_states(cap=self.cfg.state_cap)
        self.probs = np.array([p for _, p in self.states])
        g = scenario.grid
        S, K = len(self.states), scenario.K

        # allowed (user, view-position) pairs: each user's quality window
        self.pairs: list[tuple[int, int]] = []
        self.windows: list[list[int]] = []
        for k in range(K):
            r, d = scenario.requests[k], scenario.deltas[k]
            win = sorted({r, *viewsel.left_refs(r, d, g), *viewsel.right_refs(r, d, g)})
            self.windows.append([g.pos(v) for v in win])
            self.pairs.extend((k, g.pos(v)) for v in win)
        self.pair_ix = {kv: i for i, kv in enumerate(self.pairs)}
        self.active_views = sorted({vp for _, vp in self.pairs})
        self.zviews = [vp for vp in self.active_views
                       if not g.is_original(vp + g.lo)]

        nP, nV, nZ = len(self.pairs), len(self.active_views), len(self.zviews)
        self.vix = {vp: i for i, vp in enumerate(self.active_views)}
        self.zix = {vp: i for i, vp in enumerate(self.zviews)}
        self.y0 = 0
        self.z0 = nP
        self.t0 = nP + nZ
        self.e0 = self.t0 + S * nV
        self.w0 = self.e0 + S * nV
        nvar = self.w0 + S * nP
        prog = ConeProgram(nvar)
        yi = lambda k, vp: self.y0 + self.pair_ix[(k, vp)]
        zi = lambda vp: self.z0 + self.zix[vp]
        ti = lambda s, vp: self.t0 + s * nV + self.vix[vp]
        ei = lambda s, vp: self.e0 + s * nV + self.vix[vp]
        wi = lambda s, j: self.w0 + s * nP + j
        self._yi, self._zi, self._ti, self._ei, self._wi = yi, zi, ti, ei, wi

        p = scenario.params
        kap = _kappa(scenario)
        for k in range(K):
            r, d = scenario.requests[k], scenario.deltas[k]
            right = [g.pos(v) for v in viewsel.right_refs(r, d, g)]
            left = [g.pos(v) for v in viewsel.left_refs(r, d, g)]
            row = {yi(k, g.pos(r)): 1.0}
            for vp in right:
                row[yi(k, vp)] = 1.0
            prog.add_eq(row, 1.0)
            if left or right:
                row = {yi(k, g.pos(r)): 1.0}
                for vp in left:
                    row[yi(k, vp)] = 1.0
                prog.add_eq(row, 1.0)
        for j in range(nP):
            prog.add_ineq({self.y0 + j: -1.0})
            prog.add_ineq({self.y0 + j: 1.0}, 1.0)
        for (k, vp), j in self.pair_ix.items():
            if vp in self.zix:
                prog.add_ineq({yi(k, vp): 1.0, zi(vp): -1.0})
        for s in range(S):
            for vp in self.active_views:
                prog.add_ineq({ti(s, vp): -1.0})
                prog.add_ineq({ei(s, vp): -1.0})
            prog.add_ineq({ti(s, vp): 1.0 for vp in self.active_views}, p.T)
        for j, (k, vp) in enumerate(self.pairs):
            row = {wi(s, j): -self.probs[s] for s in range(S)}
            row[yi(k, vp)] = kap
            prog.add_ineq(row, 0.0)
            for s, (h, _) in enumerate(self.states):
                prog.add_exp((
                    ({wi(s, j): 1.0}, 0.0),
                    ({ti(s, vp): 1.0}, 0.0),
                    ({ti(s, vp): 1.0, ei(s, vp): h[k] / p.n0}, 0.0),
                ))
        self.prog = prog
        self._q_base = np.zeros(nvar)
        for s in range(S):
            for vp in self.active_views:
                self._q_base[ei(s, vp)] = self.probs[s]
        for vp in self.zviews:
            self._q_base[zi(vp)] = p.E_b
        for k in range(K):
            self._q_base[yi(k, g.pos(scenario.requests[k]))] -= p.beta * scenario.E_u[k]

    def y_to_vector(self, y: np.ndarray) -> np.ndarray:
        return np.array([float(y[k, vp]) for k, vp in self.pairs])

    def vector_to_y(self, vec: np.ndarray) -> np.ndarray:
        y = np.zeros((self.scenario.K, self.scenario.grid.size))
        for (k, vp), j in self.pair_ix.items():
            y[k, vp] = vec[j]
        return y

    def iterate(self, y_prev: np.ndarray, rho: float):
        """One convex step at linearization point y_prev.

        Returns (y matrix in [0,1], t, e, smoothed-objective value without
        the penalty constant, iterations).
        """
        q = self._q_base.copy()
        prev = self.y_to_vector(y_prev)
        q[self.y0:self.y0 + len(self.pairs)] += rho * (1.0 - 2.0 * prev)
        x, _, iters = self.prog.solve(q, self.cfg)
        y = self.vector_to_y(np.clip(x[self.y0:self.y0 + len(self.pairs)], 0.0, 1.0))
        S, G = len(self.states), self.scenario.grid.size
        t = np.zeros((S, G))
        e = np.zeros((S, G))
        for s in range(S):
            for vp in self.active_views:
                t[s, vp] = max(x[self._ti(s, vp)], 0.0)
                e[s, vp] = max(x[self._ei(s, vp)], 0.0)
        obj = self.relaxed_objective(y, e)
        return y, t, e, obj, iters

    def relaxed_objective(self, y: np.ndarray, e: np.ndarray) -> float:
        """Weighted energy objective with fractional y (x = max_k y)."""
        p = self.scenario.params
        g = self.scenario.grid
        transmit = float(self.probs @ e.sum(axis=1))
        zsum = sum(float(y[:, vp].max()) for vp in self.zviews)
        direct = sum(p.beta * self.scenario.E_u[k] *
                     (1.0 - float(y[k, g.pos(self.scenario.requests[k])]))
                     for k in range(self.scenario.K))
        return transmit + p.E_b * zsum + direct


class DcUtilityProgram:
    """Budgeted utility-maximizing convex step with continuous qualities.

    Quality distances are continuous in [1, V-1] (view units); the
    selection-window coupling uses the big-constant linear rows shared
    with the combinatorial checker.  Only the linear utility family is
    supported (the objective must stay linear in the quality variables).
    """

    def __init__(self, scenario: Scenario, cfg: ConvexSolveConfig | None = None,
                 c_big: float | None = None):
        if scenario.budgets is None:
            raise DomainError("utility program needs energy budgets")
        if scenario.utility.kind != "linear":
            raise DomainError("utility program supports the linear family only")
        self.scenario = scenario
        self.cfg = cfg or ConvexSolveConfig()
        self.c_big = float(c_big if c_big is not None else scenario.grid.V - 1)
        if self.c_big <= scenario.grid.V - 2:
            raise DomainError("big constant must exceed V - 2")
        self.states = scenario.joint_states(cap=self.cfg.state_cap)
        self.probs = np.array([p for _, p in self.states])
        g = scenario.grid
        S, K, G = len(self.states), scenario.K, g.size
        p = scenario.params

        self.pairs = [(k, vp) for k in range(K) for vp in range(G)]
        self.pair_ix = {kv: j for j, kv in enumerate(self.pairs)}
        self.zviews = [vp for vp in range(G) if not g.is_original(vp + g.lo)]
        self.zix = {vp: i for i, vp in enumerate(self.zviews)}
        nP, nZ = len(self.pairs), len(self.zviews)
        self.y0 = 0
        self.d0 = nP
        self.z0 = nP + K
        self.t0 = self.z0 + nZ
        self.e0 = self.t0 + S * G
        self.w0 = self.e0 + S * G
        nvar = self.w0 + S * nP
        prog = ConeProgram(nvar)
        yi = lambda k, vp: self.y0 + self.pair_ix[(k, vp)]
        di = lambda k: self.d0 + k
        zi = lambda vp: self.z0 + self.zix[vp]
        ti = lambda s, vp: self.t0 + s * G + vp
        ei = lambda s, vp: self.e0 + s * G + vp
        wi = lambda s, j: self.w0 + s * nP + j
        self._ix = (yi, di, zi, ti, ei, wi)

        for k in range(K):
            rp = g.pos(scenario.requests[k])
            row = {yi(k, rp): 1.0}
            for vp in range(rp + 1, G):
                row[yi(k, vp)] = 1.0
            prog.add_eq(dict(row), 1.0)
            row = {yi(k, rp): 1.0}
            for vp in range(rp):
                row[yi(k, vp)] = 1.0
            prog.add_eq(dict(row), 1.0)
            for vp in range(G):
                dist = abs(vp - rp) / g.Q
                if vp == rp:
                    continue
                # |v - r| - Delta_k <= c (1 - y_{k,v}), in view units
                prog.add_ineq({di(k): -1.0, yi(k, vp): self.c_big},
                              self.c_big - dist)
            prog.add_ineq({di(k): -1.0}, -1.0)
            prog.add_ineq({di(k): 1.0}, float(g.V - 1))
            # user synthesis budget: E_u (1 - y_direct) <= user limit
            prog.add_ineq({yi(k, rp): -scenario.E_u[k]},
                          scenario.budgets.E_bar_u[k] - scenario.E_u[k])
        for j in range(nP):
            prog.add_ineq({self.y0 + j: -1.0})
            prog.add_ineq({self.y0 + j: 1.0}, 1.0)
        for (k, vp), j in self.pair_ix.items():
            if vp in self.zix:
                prog.add_ineq({yi(k, vp): 1.0, zi(vp): -1.0})
        for s in range(S):
            for vp in range(G):
                prog.add_ineq({ti(s, vp): -1.0})
                prog.add_ineq({ei(s, vp): -1.0})
            prog.add_ineq({ti(s, vp): 1.0 for vp in range(G)}, p.T)
        # server budget: expected transmit energy + synthesis cost of z
        row = {}
        for s in range(S):
            for vp in range(G):
                row[ei(s, vp)] = self.probs[s]
        for vp in self.zviews:
            row[zi(vp)] = p.E_b
        prog.add_ineq(row, scenario.budgets.E_bar_b)
        kap = _kappa(scenario)
        for j, (k, vp) in enumerate(self.pairs):
            row = {wi(s, j): -self.probs[s] for s in range(S)}
            row[yi(k, vp)] = kap
            prog.add_ineq(row, 0.0)
            for s, (h, _) in enumerate(self.states):
                prog.add_exp((
                    ({wi(s, j): 1.0}, 0.0),
                    ({ti(s, vp): 1.0}, 0.0),
                    ({ti(s, vp): 1.0, ei(s, vp): h[k] / p.n0}, 0.0),
                ))
        self.prog = prog
        self._q_base = np.zeros(nvar)
        for k in range(K):
            self._q_base[di(k)] = 1.0  # minimizing sum Delta maximizes V - Delta

    def y_to_vector(self, y: np.ndarray) -> np.ndarray:
        return np.array([float(y[k, vp]) for k, vp in self.pairs])

    def iterate(self, y_prev: np.ndarray, rho: float):
        """One convex step; returns (y, deltas in view units, t, e, utility, iters)."""
        yi, di, zi, ti, ei, wi = self._ix
        q = self._q_base.copy()
        prev = self.y_to_vector(y_prev)
        q[self.y0:self.y0 + len(self.pairs)] += rho * (1.0 - 2.0 * prev)
        x, _, iters = self.prog.solve(q, self.cfg)
        K, G = self.scenario.K, self.scenario.grid.size
        S = len(self.states)
        y = np.zeros((K, G))
        for (k, vp), j in self.pair_ix.items():
            y[k, vp] = min(max(x[self.y0 + j], 0.0), 1.0)
        deltas = np.array([min(max(x[di(k)], 1.0), self.scenario.grid.V - 1.0)
                           for k in range(K)])
        t = np.zeros((S, G))
        e = np.zeros((S, G))
        for s in range(S):
            for vp in range(G):
                t[s, vp] = max(x[ti(s, vp)], 0.0)
                e[s, vp] = max(x[ei(s, vp)], 0.0)
        util = sum(self.scenario.utility.value(d, self.scenario.grid.V)
                   for d in deltas)
        return y, deltas, t, e, util, iters
