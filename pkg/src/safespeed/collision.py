"""Collision probability over a weighted pose-hypothesis cloud.

Static obstacles live in the map, so every pose hypothesis sees them somewhere
else: the predicted trajectory is rigidly transferred onto each hypothesis and
checked against the grid, and the collision probability is the weight sum of
the hypotheses whose copy collides.  Detected (dynamic) obstacles ride along
with the vehicle frame instead, so each hypothesis gets its own rollout and the
check runs on that rollout's poses relative to its own start.  The two
probabilities combine as independent events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .control import ControllerGains, ReferenceTrajectory
from .geometry import (
    DynamicObstacle,
    Footprint,
    OccupancyGrid,
    Pose,
    footprint_at,
    polygon_hits_polyline,
    relative,
    wrap_angle,
)
from .prediction import PredictedTrajectory, predict
from .vehicle import VehicleParams, VehicleState

START_POSE_TOL = 1e-6


@dataclass(frozen=True)
class WeightedParticleSet:
    """Pose hypotheses with weights, normalized to sum to one at construction."""

    particles: tuple[tuple[Pose, float], ...]
    estimated_pose: Pose

    def __post_init__(self):
        if not self.particles:
            raise ValueError("particle set must not be empty")
        ws = np.array([float(w) for _, w in self.particles])
        if not np.all(np.isfinite(ws)) or np.any(ws < 0.0):
            raise ValueError("weights must be finite and non-negative")
        total = float(np.sum(ws))
        if not (total > 0.0 and math.isfinite(total)):
            raise ValueError("weights must have a positive sum")
        ws = ws / total
        norm = tuple((pose, float(w)) for (pose, _), w in zip(self.particles, ws))
        object.__setattr__(self, "particles", norm)
        object.__setattr__(self, "_xs", np.array([p.x for p, _ in norm]))
        object.__setattr__(self, "_ys", np.array([p.y for p, _ in norm]))
        object.__setattr__(self, "_yaws", np.array([p.yaw for p, _ in norm]))
        object.__setattr__(self, "_ws", ws)

    def __len__(self) -> int:
        return len(self.particles)

    def effective_sample_size(self) -> float:
        ws = self._ws  # type: ignore[attr-defined]
        return float(1.0 / np.sum(ws * ws))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(x, y, yaw, weight) arrays in particle order (shared, do not mutate)."""
        return self._xs, self._ys, self._yaws, self._ws  # type: ignore[attr-defined]


class ParticleOutcome(NamedTuple):
    collides_static: bool
    collides_dynamic: bool
    first_collision_time: float | None


@dataclass(frozen=True)
class CollisionReport:
    """Static, dynamic and combined collision probability for one speed limit."""

    p_static: float
    p_dynamic: float
    p_total: float
    per_particle: tuple[ParticleOutcome, ...]


def combine(p_static: float, p_dynamic: float) -> float:
    """Total collision probability 1 - (1 - p_static) * (1 - p_dynamic)."""
    if not (0.0 <= p_static <= 1.0 and 0.0 <= p_dynamic <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return 1.0 - (1.0 - p_static) * (1.0 - p_dynamic)


# ---------------------------------------------------------------------------
# Batched footprint-vs-grid sweep.

def _first_hits(px: np.ndarray, py: np.ndarray, pyaw: np.ndarray,
                fp: Footprint, grid: OccupancyGrid) -> np.ndarray:
    """Earliest colliding sample index per trajectory, -1 when clear.

    px/py/pyaw are (n_traj, n_samples) map-frame pose arrays.  A bounding-box
    prefilter against an occupied-count integral image rules out almost every
    sample in one vectorized pass; only samples whose bbox window holds an
    occupied cell get the exact convex separating-axis test, and a trajectory
    stops at its first confirmed hit.
    """
    c = np.cos(pyaw)
    s = np.sin(pyaw)
    lx, ly = fp.local_arrays()
    gx = px[..., None] + c[..., None] * lx - s[..., None] * ly
    gy = py[..., None] + s[..., None] * lx + c[..., None] * ly
    o = grid.origin
    if not (o.x == 0.0 and o.y == 0.0 and o.yaw == 0.0):
        co = math.cos(o.yaw)
        so = math.sin(o.yaw)
        dx = gx - o.x
        dy = gy - o.y
        gx = dx * co + dy * so
        gy = -dx * so + dy * co
    bxmin = gx.min(axis=-1)
    bxmax = gx.max(axis=-1)
    bymin = gy.min(axis=-1)
    bymax = gy.max(axis=-1)
    ex, ey = grid.extent
    # Any footprint part outside the grid is a hit outright.
    out = (bxmin < 0.0) | (bymin < 0.0) | (bxmax > ex) | (bymax > ey)
    res = grid.resolution
    w1 = grid.width - 1
    h1 = grid.height - 1
    ix0 = np.clip(np.floor(bxmin / res).astype(np.int64) - 1, 0, w1)
    iy0 = np.clip(np.floor(bymin / res).astype(np.int64) - 1, 0, h1)
    ix1 = np.clip(np.floor(bxmax / res).astype(np.int64) + 1, 0, w1)
    iy1 = np.clip(np.floor(bymax / res).astype(np.int64) + 1, 0, h1)
    counts = grid.occupied_count(ix0, iy0, ix1, iy1)
    suspect = out | (counts > 0)
    first = np.full(px.shape[0], -1, dtype=np.int64)
    occ = grid.cells
    for i in np.nonzero(np.any(suspect, axis=1))[0]:
        for k in np.nonzero(suspect[i])[0]:
            if out[i, k]:
                first[i] = k
                break
            a0, b0, a1, b1 = ix0[i, k], iy0[i, k], ix1[i, k], iy1[i, k]
            ry, rx = np.nonzero(occ[b0 : b1 + 1, a0 : a1 + 1])
            if rx.size and _poly_hits_any_square(
                gx[i, k], gy[i, k], (a0 + rx) * res, (b0 + ry) * res, res
            ):
                first[i] = k
                break
    return first


def _poly_hits_any_square(cx: np.ndarray, cy: np.ndarray,
                          x0: np.ndarray, y0: np.ndarray, size: float) -> bool:
    """Exact convex-polygon vs axis-aligned-squares intersection (closed sets).

    Separating axis test over the two grid axes plus every polygon edge normal,
    vectorized over the candidate squares.
    """
    hit = (
        (np.min(cx) <= x0 + size) & (x0 <= np.max(cx))
        & (np.min(cy) <= y0 + size) & (y0 <= np.max(cy))
    )
    if not np.any(hit):
        return False
    nx = np.roll(cy, -1) - cy
    ny = cx - np.roll(cx, -1)
    proj = nx[:, None] * cx[None, :] + ny[:, None] * cy[None, :]
    pmin = np.min(proj, axis=1)
    pmax = np.max(proj, axis=1)
    base = nx[:, None] * x0[None, :] + ny[:, None] * y0[None, :]
    lo = base + (np.minimum(nx, 0.0) + np.minimum(ny, 0.0))[:, None] * size
    hi = base + (np.maximum(nx, 0.0) + np.maximum(ny, 0.0))[:, None] * size
    hit &= np.all((pmin[:, None] <= hi) & (lo <= pmax[:, None]), axis=0)
    return bool(np.any(hit))


def trajectory_collides_static(traj: PredictedTrajectory, grid: OccupancyGrid,
                               fp: Footprint) -> tuple[bool, float | None]:
    """Does any sample's footprint hit the grid, and at what earliest time."""
    px, py, pyaw = traj.pose_arrays()
    k = int(_first_hits(px[None, :], py[None, :], pyaw[None, :], fp, grid)[0])
    if k < 0:
        return False, None
    return True, traj.samples[k].t


def static_probability(ps: WeightedParticleSet, base_traj: PredictedTrajectory,
                       grid: OccupancyGrid, fp: Footprint
                       ) -> tuple[float, list[tuple[bool, float | None]]]:
    """Map-obstacle collision probability of a trajectory under pose uncertainty.

    The base rollout (predicted from the estimated pose) is rigidly transferred
    onto every hypothesis and checked against the grid; the probability is the
    weight sum over colliding hypotheses.  Rigid transfer is the worst case:
    the real controller would bend each copy back toward the reference, so this
    never underestimates.  Returns the probability and the per-particle
    (collides, first_collision_time) outcomes in particle order.
    """
    est = ps.estimated_pose
    s0 = base_traj.start_pose
    if (
        abs(s0.x - est.x) > START_POSE_TOL
        or abs(s0.y - est.y) > START_POSE_TOL
        or abs(wrap_angle(s0.yaw - est.yaw)) > START_POSE_TOL
    ):
        raise ValueError("base trajectory must start at the estimated pose")
    bx, by, byaw = base_traj.pose_arrays()
    ce = math.cos(est.yaw)
    se = math.sin(est.yaw)
    dx = bx - est.x
    dy = by - est.y
    rx = dx * ce + dy * se
    ry = -dx * se + dy * ce
    ryaw = byaw - est.yaw
    xs, ys, yaws, ws = ps.arrays()
    ci = np.cos(yaws)[:, None]
    si = np.sin(yaws)[:, None]
    px = xs[:, None] + rx[None, :] * ci - ry[None, :] * si
    py = ys[:, None] + rx[None, :] * si + ry[None, :] * ci
    pyaw = yaws[:, None] + ryaw[None, :]
    first = _first_hits(px, py, pyaw, fp, grid)
    times = [sample.t for sample in base_traj.samples]
    flags: list[tuple[bool, float | None]] = []
    p = 0.0
    # Fixed particle order; no early exit, the full weighted sum is required.
    for i in range(len(ws)):
        k = int(first[i])
        if k >= 0:
            p += float(ws[i])
            flags.append((True, times[k]))
        else:
            flags.append((False, None))
    # Normalized weights can sum a hair past 1.0 in floats.
    return min(p, 1.0), flags


def dynamic_probability(ps: WeightedParticleSet, ref: ReferenceTrajectory, v_lim: float,
                        tau: float, dt: float, obstacles: Sequence[DynamicObstacle],
                        fp: Footprint, params: VehicleParams, gains: ControllerGains,
                        speed: float, steering: float = 0.0, start_index: int = 0
                        ) -> tuple[float, list[tuple[bool, float | None]]]:
    """Detected-obstacle collision probability with a rollout per hypothesis.

    Obstacle coordinates are vehicle-frame, so they are the same for every
    hypothesis; what differs is how each rollout moves relative to its own
    start.  Each hypothesis gets its own closed-loop rollout from its pose at
    the current speed, and the rollout's samples, re-expressed in the frame of
    that rollout's start, are checked against the obstacle polylines.
    """
    n = len(ps)
    if not obstacles:
        return 0.0, [(False, None)] * n
    flags: list[tuple[bool, float | None]] = []
    p = 0.0
    for pose, w in ps.particles:
        traj = predict(VehicleState(pose, speed, steering), ref, v_lim, tau, dt,
                       params, gains, start_index)
        hit_t: float | None = None
        for sample in traj.samples:
            corners = footprint_at(relative(pose, sample.pose), fp)
            if any(polygon_hits_polyline(corners, obs) for obs in obstacles):
                hit_t = sample.t
                break
        if hit_t is None:
            flags.append((False, None))
        else:
            flags.append((True, hit_t))
            p += w
    return min(p, 1.0), flags


def assess(ps: WeightedParticleSet, base_traj: PredictedTrajectory, grid: OccupancyGrid,
           fp: Footprint, ref: ReferenceTrajectory, v_lim: float, tau: float, dt: float,
           obstacles: Sequence[DynamicObstacle], params: VehicleParams,
           gains: ControllerGains, speed: float, steering: float = 0.0,
           start_index: int = 0) -> CollisionReport:
    """Full collision assessment of one candidate speed limit."""
    p_s, static_flags = static_probability(ps, base_traj, grid, fp)
    p_d, dynamic_flags = dynamic_probability(
        ps, ref, v_lim, tau, dt, obstacles, fp, params, gains, speed, steering, start_index
    )
    outcomes = []
    for (cs, ts), (cd, td) in zip(static_flags, dynamic_flags):
        if ts is None:
            t = td
        elif td is None:
            t = ts
        else:
            t = min(ts, td)
        outcomes.append(ParticleOutcome(cs, cd, t))
    return CollisionReport(p_s, p_d, combine(p_s, p_d), tuple(outcomes))
