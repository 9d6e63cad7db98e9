"""Domain model: view grid, channel statistics, rate and energy accounting.

All view indices are stored as integers in grid units: a view at real
position ``v`` (e.g. 3.5) is stored as ``g = v * Q``.  Original
camera-captured views sit at multiples of ``Q``; everything in between is
synthesizable.  Integer storage keeps set membership and interval tests
exact for fractional view positions.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, SizeCapError

BOLTZMANN = 1.38e-23
DEFAULT_NOISE_TEMPERATURE = 300.0

#: Largest joint channel state space enumerated by default.
DEFAULT_STATE_CAP = 4096


@dataclass(frozen=True)
class ViewGrid:
    """Integer view grid: indices ``g`` in ``[Q, V*Q]``, real position g/Q."""

    V: int
    Q: int

    def __post_init__(self):
        if self.V < 2:
            raise DomainError(f"need at least 2 camera views, got V={self.V}")
        if self.Q < 1:
            raise DomainError(f"grid subdivision must be >= 1, got Q={self.Q}")

    @property
    def lo(self) -> int:
        return self.Q

    @property
    def hi(self) -> int:
        return self.V * self.Q

    @property
    def size(self) -> int:
        return (self.V - 1) * self.Q + 1

    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def contains(self, g: int) -> bool:
        return self.lo <= g <= self.hi

    def is_original(self, g: int) -> bool:
        return g % self.Q == 0

    def pos(self, g: int) -> int:
        """Zero-based column index of grid view ``g``."""
        return int(g) - self.lo

    def view_value(self, g: int) -> float:
        return g / self.Q

    def original_mask(self) -> np.ndarray:
        return self.indices() % self.Q == 0


@dataclass(frozen=True)
class SystemParams:
    """Physical-layer and synthesis-cost constants.

    ``n0`` defaults to thermal noise ``B * k_B * T0`` but may be set
    explicitly.
    """

    B: float = 10e6
    T: float = 0.1
    R: float = 18.59e6
    E_b: float = 1e-3
    beta: float = 2.0
    n0: float | None = None
    kB: float = BOLTZMANN
    T0: float = DEFAULT_NOISE_TEMPERATURE

    def __post_init__(self):
        if self.n0 is None:
            object.__setattr__(self, "n0", self.B * self.kB * self.T0)
        for name in ("B", "T", "R", "n0"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.E_b < 0:
            raise DomainError("server synthesis energy must be nonnegative")
        if self.beta < 1:
            raise DomainError(f"user-energy weight must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class ChannelModel:
    """Finite per-user channel state space, i.i.d. across users by default.

    ``states`` are channel power gains with probabilities ``probs``.  An
    explicit ``joint`` pmf (list of (gain-vector, probability) pairs) may be
    supplied instead of the product form, e.g. for fully correlated fading.
    """

    states: tuple[float, ...]
    probs: tuple[float, ...]
    d: float | None = None
    joint: tuple[tuple[tuple[float, ...], float], ...] | None = None

    def __post_init__(self):
        if len(self.states) != len(self.probs) or not self.states:
            raise DomainError("channel states and probabilities must align")
        if any(h <= 0 for h in self.states):
            raise DomainError("channel power gains must be positive")
        if any(p < 0 for p in self.probs):
            raise DomainError("channel probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise DomainError("channel pmf must sum to 1")
        if self.joint is not None:
            if abs(sum(p for _, p in self.joint) - 1.0) > 1e-12:
                raise DomainError("joint channel pmf must sum to 1")
            if any(p <= 0 for _, p in self.joint):
                raise DomainError("joint pmf entries must be positive")

    @classmethod
    def two_state(cls, d: float = 1e-6) -> "ChannelModel":
        """Good/bad fading at 1.5d / 0.5d with equal probability."""
        return cls(states=(0.5 * d, 1.5 * d), probs=(0.5, 0.5), d=d)

    @classmethod
    def two_state_correlated(cls, K: int, d: float = 1e-6) -> "ChannelModel":
        """Good/bad fading hitting all users simultaneously (2 joint states)."""
        bad = tuple([0.5 * d] * K)
        good = tuple([1.5 * d] * K)
        return cls(states=(0.5 * d, 1.5 * d), probs=(0.5, 0.5), d=d,
                   joint=((bad, 0.5), (good, 0.5)))

    @classmethod
    def single_state(cls, h: float) -> "ChannelModel":
        return cls(states=(h,), probs=(1.0,))


def enumerate_joint_states(channel: ChannelModel, K: int,
                           cap: int = DEFAULT_STATE_CAP):
    """All joint channel states with probabilities, lexicographic order.

    Returns a list of ``(gain_vector, probability)`` with the gain vector a
    tuple of length ``K``.  Probabilities sum to 1 exactly up to float
    accumulation.
    """
    if K < 1:
        raise DomainError("need at least one user")
    if channel.joint is not None:
        out = []
        for h, p in channel.joint:
            if len(h) != K:
                raise DomainError("joint pmf state length does not match K")
            out.append((tuple(h), float(p)))
        if len(out) > cap:
            raise SizeCapError(f"state-space too large: {len(out)} > cap {cap}")
        return out
    n = len(channel.states) ** K
    if n > cap:
        raise SizeCapError(f"state-space too large: {n} > cap {cap}")
    out = []
    for combo in itertools.product(range(len(channel.states)), repeat=K):
        h = tuple(channel.states[i] for i in combo)
        p = math.prod(channel.probs[i] for i in combo)
        if p > 0:
            out.append((h, p))
    return out


@dataclass(frozen=True)
class Budgets:
    """Per-slot energy consumption limits for the server and each user."""

    E_bar_b: float
    E_bar_u: tuple[float, ...]

    def __post_init__(self):
        if self.E_bar_b < 0 or any(e < 0 for e in self.E_bar_u):
            raise DomainError("energy budgets must be nonnegative")


@dataclass(frozen=True)
class UtilityFamily:
    """Per-user quality utility, decreasing in the quality distance.

    The default linear family is ``U(delta) = V - delta`` with ``delta`` in
    view units.  Custom families supply ``fn(delta, V)`` and are validated
    by finite sampling (nonnegative, strictly decreasing, concave).
    """

    kind: str = "linear"
    fn: object = None

    def value(self, delta: float, V: int) -> float:
        if not (1.0 - 1e-12 <= delta <= V - 1 + 1e-12):
            raise DomainError(f"quality distance {delta} outside [1, {V - 1}]")
        if self.kind == "linear":
            return float(V - delta)
        return float(self.fn(delta, V))

    def validate(self, V: int, samples: int = 200) -> None:
        xs = np.linspace(1.0, V - 1.0, samples)
        us = np.array([self.value(x, V) for x in xs])
        if np.any(us < -1e-12):
            raise DomainError("utility family must be nonnegative")
        if np.any(np.diff(us) >= 0):
            raise DomainError("utility family must be strictly decreasing")
        if samples >= 3 and np.any(np.diff(us, 2) > 1e-9 * max(1.0, us.max())):
            raise DomainError("utility family must be concave")


@dataclass(frozen=True)
class Scenario:
    """One planning instance: users, requests, qualities, system constants."""

    grid: ViewGrid
    requests: tuple[int, ...]
    deltas: tuple[int, ...]
    params: SystemParams = field(default_factory=SystemParams)
    E_u: tuple[float, ...] = ()
    channel: ChannelModel = field(default_factory=ChannelModel.two_state)
    budgets: Budgets | None = None
    utility: UtilityFamily = field(default_factory=UtilityFamily)

    def __post_init__(self):
        if not self.requests:
            raise DomainError("need at least one user")
        if len(self.deltas) != self.K:
            raise DomainError("one quality distance per user required")
        if not self.E_u:
            object.__setattr__(self, "E_u", tuple([1e-3] * self.K))
        if len(self.E_u) != self.K:
            raise DomainError("one user synthesis energy per user required")
        g = self.grid
        for r in self.requests:
            if not g.contains(r):
                raise DomainError(f"requested view {r} not on grid [{g.lo},{g.hi}]")
        for d in self.deltas:
            if not (g.Q <= d <= (g.V - 1) * g.Q):
                raise DomainError(f"quality distance {d} outside grid range")
        if self.budgets is not None and len(self.budgets.E_bar_u) != self.K:
            raise DomainError("one user energy budget per user required")

    @property
    def K(self) -> int:
        return len(self.requests)

    def joint_states(self, cap: int = DEFAULT_STATE_CAP):
        return enumerate_joint_states(self.channel, self.K, cap=cap)

    def with_requests(self, requests, deltas=None) -> "Scenario":
        deltas = tuple(deltas) if deltas is not None else self.deltas
        return replace(self, requests=tuple(requests), deltas=deltas)


def rate_phi(t: float, e: float, h: float, params: SystemParams) -> float:
    """Slot-averaged rate (bit/s) from transmit time ``t`` and energy ``e``.

    Perspective form of the log rate; defined as 0 when either t or e is 0.
    """
    if t < 0 or e < 0:
        raise DomainError("time and energy must be nonnegative")
    if h <= 0:
        raise DomainError("channel gain must be positive")
    if t == 0.0 or e == 0.0:
        return 0.0
    return (params.B / params.T) * t * math.log2(1.0 + e * h / (t * params.n0))


def energy_objective(x: np.ndarray, y: np.ndarray, e: np.ndarray,
                     scenario: Scenario, state_probs: np.ndarray) -> float:
    """Weighted per-slot energy: transmission + server and user synthesis.

    ``e`` is the (states x views) transmission-energy matrix; ``state_probs``
    the matching joint-state probabilities.
    """
    g = scenario.grid
    x = np.asarray(x)
    y = np.asarray(y)
    if y.shape != (scenario.K, g.size) or x.shape != (g.size,):
        raise DomainError("selection shapes do not match the scenario")
    e = np.asarray(e, dtype=float)
    if e.shape != (len(state_probs), g.size):
        raise DomainError("allocation shape does not match states x views")
    transmit = float(np.asarray(state_probs) @ e.sum(axis=1))
    synth_server = scenario.params.E_b * float(x[~g.original_mask()].sum())
    synth_user = sum(
        scenario.E_u[k] * (1 - int(y[k, g.pos(scenario.requests[k])]))
        for k in range(scenario.K)
    )
    return transmit + synth_server + scenario.params.beta * synth_user


def utility_total(deltas_views, scenario: Scenario) -> float:
    """Total utility of per-user quality distances given in view units."""
    return sum(scenario.utility.value(d, scenario.grid.V) for d in deltas_views)


# ---------------------------------------------------------------------------
# Scenario file round-trip (JSON, grid indices serialized in Q-units)

def scenario_to_dict(s: Scenario) -> dict:
    d = {
        "V": s.grid.V,
        "Q": s.grid.Q,
        "K": s.K,
        "requests": list(s.requests),
        "deltas": list(s.deltas),
        "B": s.params.B,
        "T": s.params.T,
        "R": s.params.R,
        "n0": s.params.n0,
        "kB": s.params.kB,
        "T0": s.params.T0,
        "E_b": s.params.E_b,
        "E_u": list(s.E_u),
        "beta": s.params.beta,
        "channel": {
            "states": list(s.channel.states),
            "probs": list(s.channel.probs),
            "d": s.channel.d,
        },
    }
    if s.channel.joint is not None:
        d["channel"]["joint"] = [[list(h), p] for h, p in s.channel.joint]
    if s.budgets is not None:
        d["budgets"] = {
            "E_bar_b": s.budgets.E_bar_b,
            "E_bar_u": list(s.budgets.E_bar_u),
        }
    return d


def scenario_from_dict(d: dict) -> Scenario:
    grid = ViewGrid(V=int(d["V"]), Q=int(d["Q"]))
    params = SystemParams(
        B=float(d["B"]), T=float(d["T"]), R=float(d["R"]),
        E_b=float(d["E_b"]), beta=float(d["beta"]),
        n0=float(d["n0"]) if d.get("n0") is not None else None,
        kB=float(d.get("kB", BOLTZMANN)),
        T0=float(d.get("T0", DEFAULT_NOISE_TEMPERATURE)),
    )
    ch = d["channel"]
    joint = None
    if ch.get("joint"):
        joint = tuple((tuple(h), float(p)) for h, p in ch["joint"])
    channel = ChannelModel(states=tuple(ch["states"]), probs=tuple(ch["probs"]),
                           d=ch.get("d"), joint=joint)
    budgets = None
    if d.get("budgets"):
        budgets = Budgets(E_bar_b=float(d["budgets"]["E_bar_b"]),
                          E_bar_u=tuple(d["budgets"]["E_bar_u"]))
    return Scenario(grid=grid, requests=tuple(int(r) for r in d["requests"]),
                    deltas=tuple(int(x) for x in d["deltas"]), params=params,
                    E_u=tuple(float(x) for x in d["E_u"]), channel=channel,
                    budgets=budgets)


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as f:
        json.dump(scenario_to_dict(s), f, indent=2)
        f.write("\n")


def load_scenario(path) -> Scenario:
    with open(path) as f:
        return scenario_from_dict(json.load(f))
