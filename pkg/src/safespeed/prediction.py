"""Closed-loop trajectory prediction.

A rollout runs the real controller against the bicycle model from a given
start state under a candidate speed limit.  Because controller and model are
the same code the vehicle executes, prediction differs from execution only
through the start state fed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .control import ControllerGains, ControllerState, ReferenceTrajectory, command_floats
from .geometry import Pose
from .vehicle import VehicleParams, VehicleState, integrate


@dataclass(frozen=True)
class TrajectorySample:
    t: float      # seconds from rollout start
    pose: Pose
    speed: float  # m/s


@dataclass(frozen=True)
class PredictedTrajectory:
    """Time-stamped rollout samples; the first sample is the start state."""

    samples: tuple[TrajectorySample, ...]
    horizon: float

    def __post_init__(self):
        if not self.samples:
            raise ValueError("trajectory needs at least one sample")
        if self.samples[0].t != 0.0:
            raise ValueError("first sample must be at t=0")
        for a, b in zip(self.samples, self.samples[1:]):
            if b.t <= a.t:
                raise ValueError("sample times must increase strictly")
        if not (self.horizon > 0.0):
            raise ValueError("horizon must be positive")

    @property
    def start_pose(self) -> Pose:
        return self.samples[0].pose

    def pose_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(x, y, yaw) sample arrays, built once (shared, do not mutate)."""
        cached = getattr(self, "_arrays", None)
        if cached is None:
            n = len(self.samples)
            px = np.empty(n)
            py = np.empty(n)
            pyaw = np.empty(n)
            for k, sample in enumerate(self.samples):
                px[k] = sample.pose.x
                py[k] = sample.pose.y
                pyaw[k] = sample.pose.yaw
            cached = (px, py, pyaw)
            object.__setattr__(self, "_arrays", cached)
        return cached

    def path_length(self) -> float:
        """Total chord length over the samples."""
        total = 0.0
        for a, b in zip(self.samples, self.samples[1:]):
            total += math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y)
        return total


def predict(start: VehicleState, ref: ReferenceTrajectory, v_lim: float, tau: float,
            dt: float, params: VehicleParams, gains: ControllerGains,
            start_index: int = 0) -> PredictedTrajectory:
    """Roll the controller and vehicle model forward for ceil(tau/dt) steps.

    Records every intermediate state, so the sample count is ceil(tau/dt) + 1
    including the start.  The rollout begins at the supplied state's actual
    speed; a v_lim below it therefore predicts the braking maneuver, which is
    exactly what makes collision probability grow with the candidate limit.

    :param v_lim: candidate speed limit, m/s, >= 0
    :param tau: prediction horizon, s
    :param dt: integration step, s, 0 < dt <= tau
    """
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError("tau must be positive and finite")
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError("dt must be positive and finite")
    if dt > tau:
        raise ValueError("dt must not exceed tau")
    if v_lim < 0.0 or not math.isfinite(v_lim):
        raise ValueError("v_lim must be non-negative and finite")
    steps = math.ceil(tau / dt)
    ctl = ControllerState(start_index)
    x, y = start.pose.x, start.pose.y
    yaw = start.pose.yaw
    speed = start.speed
    steering = start.steering
    samples = [TrajectorySample(0.0, start.pose, speed)]
    for k in range(1, steps + 1):
        steer, accel, _ = command_floats(x, y, yaw, speed, v_lim, ref, gains, params, ctl)
        x, y, yaw, speed, steering = integrate(x, y, yaw, speed, steering, accel, steer, dt, params)
        samples.append(TrajectorySample(k * dt, Pose(x, y, yaw), speed))
    return PredictedTrajectory(tuple(samples), tau)
