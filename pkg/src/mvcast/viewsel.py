"""Combinatorial view-selection structure.

Feasible per-user utilization rows, the pairwise candidate-view sets that
shrink the search space, reduced enumeration, and the two reference
selection mechanisms used as baselines (synthesis at the server only /
synthesis at the users only).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SizeCapError
from .model import Scenario, ViewGrid


@dataclass(frozen=True)
class SelectionPattern:
    """Binary transmit vector x (per view) and utilization matrix y (user x view)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.int8))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int8))
        self.x.setflags(write=False)
        self.y.setflags(write=False)

    def transmitted_count(self) -> int:
        return int(self.x.sum())

    def to_sparse(self, grid: ViewGrid) -> dict:
        idx = grid.indices()
        return {
            "x": [int(g) for g, on in zip(idx, self.x) if on],
            "y": [[int(k), int(idx[v])] for k, v in zip(*np.nonzero(self.y))],
        }

    @classmethod
    def from_sparse(cls, d: dict, K: int, grid: ViewGrid) -> "SelectionPattern":
        x = np.zeros(grid.size, dtype=np.int8)
        y = np.zeros((K, grid.size), dtype=np.int8)
        for g in d["x"]:
            x[grid.pos(g)] = 1
        for k, g in d["y"]:
            y[k, grid.pos(g)] = 1
        return cls(x=x, y=y)


def left_refs(r: int, delta: int, grid: ViewGrid) -> list[int]:
    """Grid views usable as left reference for request r: [r-delta, r)."""
    return [g for g in range(max(grid.lo, r - delta), r)]


def right_refs(r: int, delta: int, grid: ViewGrid) -> list[int]:
    """Grid views usable as right reference for request r: (r, r+delta]."""
    return [g for g in range(r + 1, min(grid.hi, r + delta) + 1)]


def feasible_y_rows(r: int, delta: int, grid: ViewGrid,
                    forbidden: set[int] | None = None) -> list[tuple[int, ...]]:
    """All feasible utilization supports for one user, direct row first.

    Each row is a tuple of grid indices set to 1: either ``(r,)`` or a
    ``(left, right)`` reference pair.  Boundary requests admit only the
    direct row.  ``forbidden`` removes masked grid views from consideration.
    """
    forbidden = forbidden or set()
    lefts = [g for g in left_refs(r, delta, grid) if g not in forbidden]
    rights = [g for g in right_refs(r, delta, grid) if g not in forbidden]
    rows: list[tuple[int, ...]] = []
    boundary = not left_refs(r, delta, grid) or not right_refs(r, delta, grid)
    if r not in forbidden:
        rows.append((r,))
    if not boundary:
        rows.extend((l, rt) for l in lefts for rt in rights)
    if not rows:
        raise DomainError(f"no feasible utilization row for request {r}")
    return rows


def rows_to_pattern(rows: tuple[tuple[int, ...], ...], scenario: Scenario) -> SelectionPattern:
    """Build a pattern from one chosen row per user, with minimal x."""
    g = scenario.grid
    y = np.zeros((scenario.K, g.size), dtype=np.int8)
    for k, row in enumerate(rows):
        for v in row:
            y[k, g.pos(v)] = 1
    return SelectionPattern(x=y.max(axis=0), y=y)


def check_selection(pattern: SelectionPattern, scenario: Scenario):
    """Verify every selection constraint; returns (ok, violation tags)."""
    g = scenario.grid
    x, y = pattern.x, pattern.y
    violations = []
    if y.shape != (scenario.K, g.size) or x.shape != (g.size,):
        return False, ["shape"]
    if not np.isin(x, (0, 1)).all():
        violations.append("x-binary")
    if not np.isin(y, (0, 1)).all():
        violations.append("y-binary")
    for k in range(scenario.K):
        r, d = scenario.requests[k], scenario.deltas[k]
        direct = int(y[k, g.pos(r)])
        rsum = sum(int(y[k, g.pos(v)]) for v in right_refs(r, d, g))
        lsum = sum(int(y[k, g.pos(v)]) for v in left_refs(r, d, g))
        if right_refs(r, d, g) and direct + rsum != 1:
            violations.append("right-reference")
        elif not right_refs(r, d, g) and direct != 1:
            violations.append("right-reference")
        if left_refs(r, d, g) and direct + lsum != 1:
            violations.append("left-reference")
        elif not left_refs(r, d, g) and direct != 1:
            violations.append("left-reference")
        window = {r, *left_refs(r, d, g), *right_refs(r, d, g)}
        outside = [v for v in g.indices() if v not in window and y[k, g.pos(v)]]
        if outside:
            violations.append("outside-window")
    if np.any(y.max(axis=0) > x):
        violations.append("transmit-utilize")
    return not violations, sorted(set(violations))


# ---------------------------------------------------------------------------
# Candidate-view sets

def _common_delta(scenario: Scenario) -> int:
    deltas = set(scenario.deltas)
    if len(deltas) > 1:
        raise DomainError("candidate-set reduction needs a common quality distance")
    return deltas.pop()


def candidate_pair(a: int, b: int, scenario: Scenario) -> set[int]:
    """Views user ``a`` may utilize at an optimum, considering only user ``b``."""
    if a == b:
        raise DomainError("candidate_pair needs two distinct users")
    g = scenario.grid
    d = _common_delta(scenario)
    ra, rb = scenario.requests[a], scenario.requests[b]
    rmin, rmax = min(ra, rb), max(ra, rb)
    plus_min = set(right_refs(rmin, d, g))
    minus_max = set(left_refs(rmax, d, g))

    def clip(v):
        return min(max(v, g.lo), g.hi)

    if rmax in plus_min:
        members = {ra, rb, rmax - d, rmin + d}
    elif not (plus_min & minus_max):
        return {ra}
    else:
        overlap_orig = {v for v in plus_min & minus_max if g.is_original(v)}
        members = {ra, rmax - d, rmin + d} | overlap_orig
    return {clip(v) for v in members}


def candidate_user(k: int, scenario: Scenario) -> set[int]:
    """Union of pairwise candidate sets for user ``k`` over all other users."""
    if scenario.K == 1:
        return {scenario.requests[k]}
    out: set[int] = set()
    for i in range(scenario.K):
        if i != k:
            out |= candidate_pair(k, i, scenario)
    return out


def candidate_union(scenario: Scenario) -> set[int]:
    out: set[int] = set()
    for k in range(scenario.K):
        out |= candidate_user(k, scenario)
    return out


def reduction_applies(scenario: Scenario) -> bool:
    """True when the support-reduction hypotheses hold for this scenario."""
    if len(set(scenario.deltas)) > 1:
        return False
    beta = scenario.params.beta
    return all(beta * eu >= scenario.params.E_b for eu in scenario.E_u)


def reduced_rows(scenario: Scenario) -> list[list[tuple[int, ...]]]:
    """Per-user feasible rows with support inside the global candidate union."""
    if not reduction_applies(scenario):
        raise DomainError(
            "reduced enumeration requires a common quality distance and "
            "weighted user synthesis energy >= server synthesis energy")
    union = candidate_union(scenario)
    g = scenario.grid
    per_user = []
    for k in range(scenario.K):
        rows = feasible_y_rows(scenario.requests[k], scenario.deltas[k], g)
        per_user.append([row for row in rows if set(row) <= union])
    return per_user


def full_rows(scenario: Scenario) -> list[list[tuple[int, ...]]]:
    g = scenario.grid
    return [feasible_y_rows(scenario.requests[k], scenario.deltas[k], g)
            for k in range(scenario.K)]


def enumerate_reduced(scenario: Scenario, cap: int | None = None):
    """Yield every selection pattern in the reduced search space.

    Deterministic order: direct row first per user, then (left, right)
    pairs lexicographically, users nested outer-to-inner.
    """
    per_user = reduced_rows(scenario)
    count = math.prod(len(rows) for rows in per_user)
    if cap is not None and count > cap:
        raise SizeCapError(f"reduced enumeration size {count} exceeds cap {cap}")
    for combo in itertools.product(*per_user):
        yield rows_to_pattern(combo, scenario)


def enumerate_full_y(scenario: Scenario, cap: int | None = None):
    """Yield every feasible y (with minimal x) over the unrestricted space."""
    per_user = full_rows(scenario)
    count = math.prod(len(rows) for rows in per_user)
    if cap is not None and count > cap:
        raise SizeCapError(f"full enumeration size {count} exceeds cap {cap}")
    for combo in itertools.product(*per_user):
        yield rows_to_pattern(combo, scenario)


# ---------------------------------------------------------------------------
# Baseline mechanisms

def baseline_server(scenario: Scenario) -> SelectionPattern:
    """Direct delivery of every requested view; synthesis only at the server."""
    g = scenario.grid
    y = np.zeros((scenario.K, g.size), dtype=np.int8)
    for k, r in enumerate(scenario.requests):
        y[k, g.pos(r)] = 1
    return SelectionPattern(x=y.max(axis=0), y=y)


def baseline_user_mask(scenario: Scenario) -> np.ndarray:
    """Forbidden-entry mask (user x view) for the synthesis-at-users mechanism.

    Users may only utilize original views within their quality window, so
    every non-original view and every view outside the closed window is
    forbidden.
    """
    g = scenario.grid
    forbidden = np.ones((scenario.K, g.size), dtype=bool)
    for k in range(scenario.K):
        r, d = scenario.requests[k], scenario.deltas[k]
        for v in g.indices():
            if g.is_original(v) and r - d <= v <= r + d:
                forbidden[k, g.pos(v)] = False
    return forbidden


def baseline_user_pattern(scenario: Scenario) -> SelectionPattern:
    """A canonical feasible pattern under the synthesis-at-users mechanism.

    Direct delivery when the request is original; otherwise the nearest
    original reference pair.
    """
    g = scenario.grid
    forbidden_rows = baseline_user_mask(scenario)
    chosen = []
    for k in range(scenario.K):
        r, d = scenario.requests[k], scenario.deltas[k]
        forb = {v for v in g.indices() if forbidden_rows[k, g.pos(v)]}
        rows = feasible_y_rows(r, d, g, forbidden=forb)
        if (r,) in rows:
            chosen.append((r,))
        else:
            chosen.append(min(rows, key=lambda row: (abs(row[0] - r) + abs(row[1] - r), row)))
    return rows_to_pattern(tuple(chosen), scenario)
