"""Probabilistic speed limiting under pose uncertainty.

The package turns a localization pose cloud into a maximum safe speed: predict
where the vehicle goes under each candidate speed limit, transfer that rollout
onto every pose hypothesis, score the collision probability against static and
dynamic obstacles, and pick the fastest limit whose risk stays below an
acceptance threshold.
"""

from .collision import (
    CollisionReport,
    ParticleOutcome,
    WeightedParticleSet,
    assess,
    combine,
    dynamic_probability,
    static_probability,
    trajectory_collides_static,
)
from .control import (
    ControllerGains,
    ControllerState,
    ReferenceTrajectory,
    speed_control,
    steering_control,
    tracking_command,
)
from .geometry import (
    DynamicObstacle,
    Footprint,
    OccupancyGrid,
    Pose,
    compose,
    footprint_at,
    polygon_hits_grid,
    polygon_hits_polyline,
    relative,
    transfer_trajectory,
    wrap_angle,
    write_pgm,
)
from .harness import (
    ActuationNoise,
    LocalizationConfig,
    LocalizationEmulator,
    MapObstacle,
    PredictionConfig,
    RunLog,
    Scenario,
    ScenarioError,
    ScenarioFieldError,
    ScenarioFileError,
    ScenarioValidationError,
    TickRecord,
    emulate_localization,
    load_scenario,
    run,
    validate_scenario,
    write_outputs,
)
from .prediction import PredictedTrajectory, TrajectorySample, predict
from .speed_search import (
    SpeedGrid,
    ThresholdFunction,
    brute_force_safe_speed,
    find_safe_speed,
    max_evaluations,
    threshold,
)
from .vehicle import ControlCommand, VehicleParams, VehicleState, step
from .worlds import WORLDS, materialize

__version__ = "0.1.0"

__all__ = [
    "ActuationNoise", "CollisionReport", "ControlCommand", "ControllerGains",
    "ControllerState", "DynamicObstacle", "Footprint", "LocalizationConfig",
    "LocalizationEmulator", "MapObstacle", "OccupancyGrid", "ParticleOutcome",
    "Pose", "PredictedTrajectory", "PredictionConfig", "ReferenceTrajectory",
    "RunLog", "Scenario", "ScenarioError", "ScenarioFieldError",
    "ScenarioFileError", "ScenarioValidationError", "SpeedGrid",
    "ThresholdFunction", "TickRecord", "TrajectorySample", "VehicleParams",
    "VehicleState", "WORLDS", "WeightedParticleSet", "assess",
    "brute_force_safe_speed", "combine", "compose", "dynamic_probability",
    "emulate_localization", "find_safe_speed", "footprint_at", "load_scenario",
    "materialize", "max_evaluations", "polygon_hits_grid",
    "polygon_hits_polyline", "predict", "relative", "run", "speed_control",
    "static_probability", "steering_control", "step", "threshold",
    "tracking_command", "trajectory_collides_static",
    "transfer_trajectory", "validate_scenario", "wrap_angle", "write_outputs",
    "write_pgm",
]
