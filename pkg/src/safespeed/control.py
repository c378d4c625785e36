"""Pure-pursuit steering and proportional speed control.

The exact control stack of the platform is unimportant; what matters for the
speed limiter is that the very same controller code drives both the predicted
rollouts and the simulated vehicle, so a rollout at the current state really is
what the vehicle would do.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import NamedTuple

from .vehicle import VehicleParams, VehicleState, _clamp


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Piecewise-linear reference path with optional per-waypoint speed hints."""

    waypoints: tuple[tuple[float, float], ...]
    speeds: tuple[float, ...] | None = None

    def __post_init__(self):
        wps = tuple((float(p[0]), float(p[1])) for p in self.waypoints)
        if len(wps) < 2:
            raise ValueError("reference needs at least 2 waypoints")
        lengths = []
        for (ax, ay), (bx, by) in zip(wps, wps[1:]):
            d = math.hypot(bx - ax, by - ay)
            if d == 0.0:
                raise ValueError("consecutive waypoints must be distinct")
            lengths.append(d)
        if self.speeds is not None:
            spd = tuple(float(v) for v in self.speeds)
            if len(spd) != len(wps):
                raise ValueError("speed hints must match waypoint count")
            if any(v < 0.0 for v in spd):
                raise ValueError("speed hints must be non-negative")
            object.__setattr__(self, "speeds", spd)
        object.__setattr__(self, "waypoints", wps)
        # Cumulative arc length up to each waypoint; cum[-1] is the route length.
        cum = [0.0]
        for d in lengths:
            cum.append(cum[-1] + d)
        object.__setattr__(self, "_cum", tuple(cum))
        object.__setattr__(self, "_seg_len", tuple(lengths))

    @property
    def total_length(self) -> float:
        return self._cum[-1]  # type: ignore[attr-defined]

    def point_at_arc(self, s: float) -> tuple[float, float]:
        """Point at arc position s along the polyline, clamped to its ends."""
        cum = self._cum  # type: ignore[attr-defined]
        if s <= 0.0:
            return self.waypoints[0]
        if s >= cum[-1]:
            return self.waypoints[-1]
        j = bisect_right(cum, s) - 1
        t = (s - cum[j]) / self._seg_len[j]  # type: ignore[attr-defined]
        ax, ay = self.waypoints[j]
        bx, by = self.waypoints[j + 1]
        return ax + t * (bx - ax), ay + t * (by - ay)


@dataclass(frozen=True)
class ControllerGains:
    k_v: float = 0.5    # lookahead distance per unit speed, s
    l_min: float = 0.5  # m
    l_max: float = 3.0  # m
    k_p: float = 1.5    # speed loop gain, 1/s

    def __post_init__(self):
        if not (0.0 < self.l_min <= self.l_max):
            raise ValueError("need 0 < l_min <= l_max")
        if self.k_v <= 0.0 or self.k_p <= 0.0:
            raise ValueError("gains must be positive")


class ControllerState:
    """Mutable tracker state: the last matched segment index.

    The nearest-point search never backs up past it, so self-intersecting or
    closely folded routes (a U-turn) cannot re-capture the vehicle onto an
    earlier stretch.  Each rollout carries its own instance.
    """

    __slots__ = ("index",)

    def __init__(self, index: int = 0):
        self.index = index

    def copy(self) -> "ControllerState":
        return ControllerState(self.index)


class _Projection(NamedTuple):
    seg: int        # matched segment index
    s: float        # arc position of the nearest point
    beyond: bool    # projected past the final waypoint


def _project(ref: ReferenceTrajectory, x: float, y: float, start_index: int) -> _Projection:
    wps = ref.waypoints
    cum = ref._cum  # type: ignore[attr-defined]
    seg_len = ref._seg_len  # type: ignore[attr-defined]
    nseg = len(wps) - 1
    first = min(max(start_index, 0), nseg - 1)
    best_seg = first
    best_t = 0.0
    best_d2 = math.inf
    last_traw = 0.0
    for j in range(first, nseg):
        ax, ay = wps[j]
        bx, by = wps[j + 1]
        ex = bx - ax
        ey = by - ay
        traw = ((x - ax) * ex + (y - ay) * ey) / (seg_len[j] * seg_len[j])
        t = _clamp(traw, 0.0, 1.0)
        px = ax + t * ex
        py = ay + t * ey
        d2 = (x - px) * (x - px) + (y - py) * (y - py)
        if d2 < best_d2:
            best_d2 = d2
            best_seg = j
            best_t = t
        if j == nseg - 1:
            last_traw = traw
    beyond = best_seg == nseg - 1 and best_t >= 1.0 and last_traw >= 1.0
    return _Projection(best_seg, cum[best_seg] + best_t * seg_len[best_seg], beyond)


def _steer_target(x: float, y: float, yaw: float, speed: float, ref: ReferenceTrajectory,
                  gains: ControllerGains, params: VehicleParams, proj: _Projection) -> float:
    if proj.beyond:
        return 0.0
    l_d = _clamp(gains.k_v * speed, gains.l_min, gains.l_max)
    tx, ty = ref.point_at_arc(proj.s + l_d)
    alpha = math.atan2(ty - y, tx - x) - yaw
    steer = math.atan2(2.0 * params.wheelbase * math.sin(alpha), l_d)
    return _clamp(steer, -params.max_steer, params.max_steer)


def _speed_target(v_lim: float, ref: ReferenceTrajectory,
                  params: VehicleParams, proj: _Projection) -> float:
    target = v_lim
    if ref.speeds is not None:
        j = proj.seg
        hint = min(ref.speeds[j], ref.speeds[j + 1])
        if hint < target:
            target = hint
    d_end = ref.total_length - proj.s
    if d_end < 0.0:
        d_end = 0.0
    # Stopping profile: never faster than a full brake can absorb by route end.
    stop = math.sqrt(2.0 * params.max_decel * d_end)
    return stop if stop < target else target


def _accel_for(target: float, speed: float, gains: ControllerGains, params: VehicleParams) -> float:
    if target <= 0.0 and speed > 0.0:
        # A zero target is an order to stop, not a setpoint to converge on:
        # brake at the limit instead of letting the P loop tail off.
        return -params.max_decel
    return _clamp(gains.k_p * (target - speed), -params.max_decel, params.max_accel)


def steering_control(state: VehicleState, ref: ReferenceTrajectory, gains: ControllerGains,
                     params: VehicleParams, ctl: ControllerState) -> float:
    """Pure-pursuit steering target for the current state.

    The lookahead point sits clamp(k_v*speed, l_min, l_max) meters ahead of the
    matched point along the path; steering follows atan(2*wheelbase*sin(alpha)
    / lookahead) where alpha is the body-frame bearing of that point.  Past the
    final waypoint the wheel is simply centered.
    """
    proj = _project(ref, state.pose.x, state.pose.y, ctl.index)
    ctl.index = proj.seg
    return _steer_target(state.pose.x, state.pose.y, state.pose.yaw, state.speed,
                         ref, gains, params, proj)


def speed_control(state: VehicleState, v_lim: float, ref: ReferenceTrajectory,
                  gains: ControllerGains, params: VehicleParams, ctl: ControllerState) -> float:
    """Acceleration command tracking min(v_lim, speed hint, stopping profile)."""
    if v_lim < 0.0:
        raise ValueError("v_lim must be non-negative")
    proj = _project(ref, state.pose.x, state.pose.y, ctl.index)
    ctl.index = proj.seg
    target = _speed_target(v_lim, ref, params, proj)
    return _accel_for(target, state.speed, gains, params)


def command_floats(x: float, y: float, yaw: float, speed: float, v_lim: float,
                   ref: ReferenceTrajectory, gains: ControllerGains,
                   params: VehicleParams, ctl: ControllerState) -> tuple[float, float, float]:
    """One fused control evaluation: (steer_target, accel, speed_target).

    Projects onto the path once and skips dataclass plumbing; this is the
    rollout hot path, so it works on plain floats.
    """
    proj = _project(ref, x, y, ctl.index)
    ctl.index = proj.seg
    steer = _steer_target(x, y, yaw, speed, ref, gains, params, proj)
    target = _speed_target(v_lim, ref, params, proj)
    return steer, _accel_for(target, speed, gains, params), target


def tracking_command(state: VehicleState, v_lim: float, ref: ReferenceTrajectory,
                     gains: ControllerGains, params: VehicleParams,
                     ctl: ControllerState) -> tuple[float, float, float]:
    """Steering and speed control in one call, projecting onto the path once."""
    return command_floats(state.pose.x, state.pose.y, state.pose.yaw, state.speed,
                          v_lim, ref, gains, params, ctl)
