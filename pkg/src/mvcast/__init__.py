"""Planning library for multicast multi-view video over a slotted downlink.

Submodules:
    model      -- view grid, channel statistics, energy/utility accounting
    viewsel    -- combinatorial selection structure and baselines
    convexcore -- conic solvers, dual decomposition, DC iteration programs
    dcsolver   -- exact and penalized-DC planning algorithms
    oracle     -- brute-force ground truth for tiny instances
    cli        -- scenario generation, sweeps, command-line entry point
"""

from .model import (Budgets, ChannelModel, Scenario, SystemParams, UtilityFamily,
                    ViewGrid)
from .viewsel import SelectionPattern
from .convexcore import AllocationSolution, ConvexSolveConfig, DualState
from .dcsolver import DcConfig, PlanResult

__all__ = [
    "AllocationSolution", "Budgets", "ChannelModel", "ConvexSolveConfig",
    "DcConfig", "DualState", "PlanResult", "Scenario", "SelectionPattern",
    "SystemParams", "UtilityFamily", "ViewGrid",
]

__version__ = "0.1.0"
