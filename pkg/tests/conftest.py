"""Shared fixtures: seeded tiny instances used across the suite."""

import numpy as np
import pytest

from mvcast.model import Budgets, ChannelModel, Scenario, ViewGrid


def tiny_energy_instances(n=50, seed=20240817):
    """Seeded draw of desk-size energy instances (V=3, 2 states/user)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        Q = int(rng.choice([1, 2]))
        K = int(rng.choice([2, 3]))
        grid = ViewGrid(V=3, Q=Q)
        requests = tuple(int(rng.integers(grid.lo, grid.hi + 1)) for _ in range(K))
        out.append(Scenario(grid=grid, requests=requests, deltas=(Q,) * K,
                            channel=ChannelModel.two_state()))
    return out


def tiny_utility_instances(n=50, seed=20240818):
    """Seeded budgeted instances with deliberately mixed budget tightness."""
    rng = np.random.default_rng(seed)
    out = []
    server_choices = [2e-4, 5e-4, 1.2e-3, 2.5e-3, 1e-2]
    user_choices = [0.0, 1e-3]
    for _ in range(n):
        Q = int(rng.choice([1, 2]))
        grid = ViewGrid(V=3, Q=Q)
        K = 2
        requests = tuple(int(rng.integers(grid.lo, grid.hi + 1)) for _ in range(K))
        budgets = Budgets(
            E_bar_b=float(rng.choice(server_choices)),
            E_bar_u=tuple(float(rng.choice(user_choices)) for _ in range(K)),
        )
        out.append(Scenario(grid=grid, requests=requests, deltas=(Q,) * K,
                            channel=ChannelModel.two_state(), budgets=budgets))
    return out


@pytest.fixture(scope="session")
def energy_instances():
    return tiny_energy_instances()


@pytest.fixture(scope="session")
def utility_instances():
    return tiny_utility_instances()


@pytest.fixture()
def simple_scenario():
    return Scenario(grid=ViewGrid(V=3, Q=2), requests=(3, 5), deltas=(2, 2))


@pytest.fixture()
def single_state_scenario():
    return Scenario(grid=ViewGrid(V=3, Q=1), requests=(1,), deltas=(1,),
                    channel=ChannelModel.single_state(1e-6))
