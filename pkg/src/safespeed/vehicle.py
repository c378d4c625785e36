"""Kinematic bicycle model of the vehicle.

Forward-Euler at a fixed step: steering slews toward its target under a rate
limit, speed integrates commanded acceleration, and the pose advances with the
updated speed and heading.  Good enough for closed-loop rollout prediction; no
tire slip, no reverse driving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Footprint, Pose, wrap_angle


@dataclass(frozen=True)
class VehicleParams:
    """Geometry and actuation limits of the platform.

    Defaults describe a small car-like robot; scenarios override them.
    """

    wheelbase: float = 1.0          # m
    max_steer: float = 0.6          # rad, must stay below pi/2
    max_steer_rate: float = 1.2     # rad/s
    max_accel: float = 1.5          # m/s^2
    max_decel: float = 2.0          # m/s^2, positive magnitude
    length: float = 1.5             # m, footprint
    width: float = 0.8              # m, footprint
    v_max_capability: float = 4.5   # m/s

    def __post_init__(self):
        for name in (
            "wheelbase", "max_steer", "max_steer_rate", "max_accel",
            "max_decel", "length", "width", "v_max_capability",
        ):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")
        if self.max_steer >= 0.5 * math.pi:
            raise ValueError("max_steer must be below pi/2")

    def footprint(self) -> Footprint:
        return Footprint.rectangle(self.length, self.width)


@dataclass(frozen=True)
class VehicleState:
    """Pose plus the scalar states the controller acts on."""

    pose: Pose
    speed: float = 0.0      # m/s, forward positive
    steering: float = 0.0   # rad


@dataclass(frozen=True)
class ControlCommand:
    accel: float         # m/s^2, requested
    steer_target: float  # rad, requested steering angle


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def integrate(x: float, y: float, yaw: float, speed: float, steering: float,
              accel_cmd: float, steer_cmd: float, dt: float, params: VehicleParams
              ) -> tuple[float, float, float, float, float]:
    """One integration step on plain floats; the rollout hot path.

    Returns (x, y, yaw, speed, steering) after dt seconds.  step() is the
    dataclass wrapper; both must stay bit-identical.
    """
    target = _clamp(steer_cmd, -params.max_steer, params.max_steer)
    dmax = params.max_steer_rate * dt
    steer = steering + _clamp(target - steering, -dmax, dmax)
    steer = _clamp(steer, -params.max_steer, params.max_steer)
    accel = _clamp(accel_cmd, -params.max_decel, params.max_accel)
    speed = speed + accel * dt
    if speed < 0.0:
        speed = 0.0
    yaw = wrap_angle(yaw + speed * math.tan(steer) / params.wheelbase * dt)
    return (
        x + speed * math.cos(yaw) * dt,
        y + speed * math.sin(yaw) * dt,
        yaw,
        speed,
        steer,
    )


def step(state: VehicleState, cmd: ControlCommand, dt: float, params: VehicleParams) -> VehicleState:
    """Advance the vehicle one step of dt seconds.

    Steering moves toward the clamped target at no more than max_steer_rate,
    acceleration is clamped to [-max_decel, max_accel], and speed is floored at
    zero (the platform does not reverse).  Purely deterministic.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError("dt must be positive and finite")
    x, y, yaw, speed, steer = integrate(
        state.pose.x, state.pose.y, state.pose.yaw, state.speed, state.steering,
        cmd.accel, cmd.steer_target, dt, params,
    )
    return VehicleState(Pose(x, y, yaw), speed, steer)
