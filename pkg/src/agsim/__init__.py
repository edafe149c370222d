"""agsim: headless deterministic air-ground co-simulation.

Per-vehicle API instances over a lockstep clock, per-vehicle-type RPC
endpoints, and four cooperative tasks: lidar mapping with ICP fusion,
aerial-assisted ground planning, dual standoff tracking, and multi-agent
formation.
"""

from .geometry import NedPose, Quaternion, Ray, RigidTransform, Vec3
from .simcore import SimConfig, Simulator, SensorSuite
from .simtime import SimTime
from .vehicles import CarCommand, UavCommand, VehicleParams, VehicleState, VehicleType
from .world import Obstacle, Scene, bundled_scene, load_scene

__version__ = "0.1.0"

__all__ = [
    "CarCommand",
    "NedPose",
    "Obstacle",
    "Quaternion",
    "Ray",
    "RigidTransform",
    "Scene",
    "SensorSuite",
    "SimConfig",
    "SimTime",
    "Simulator",
    "UavCommand",
    "VehicleParams",
    "VehicleState",
    "VehicleType",
    "Vec3",
    "bundled_scene",
    "load_scene",
    "__version__",
]
