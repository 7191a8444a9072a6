"""Sampling-based MPC with physics-based traversability limits for off-road driving."""

__version__ = "0.1.0"

from .constraints import ConstraintParams, VehicleParams
from .kinematics import Control, DelayConfig, FeasibilityLimits, PlanarState
from .mppi import MppiConfig, Planner, TaskCost
from .terrain import ElevationMap, TerrainSpec, WheelFootprint, generate_terrain

__all__ = [
    "ConstraintParams", "VehicleParams", "Control", "DelayConfig",
    "FeasibilityLimits", "PlanarState", "MppiConfig", "Planner", "TaskCost",
    "ElevationMap", "TerrainSpec", "WheelFootprint", "generate_terrain",
    "__version__",
]
