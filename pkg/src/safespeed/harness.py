"""Closed-loop scenario harness.

Drives a ground-truth vehicle along a reference route while an emulated
localization feeds the speed limiter: every control tick the pose cloud is
sampled around the true pose, a base rollout is predicted from the estimated
pose, the speed-limit grid is searched for the fastest level whose collision
probability stays under the acceptance threshold, and that limit is applied to
the plant.  The log captures everything needed for offline plots.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .collision import CollisionReport, WeightedParticleSet, assess
from .control import ControllerGains, ControllerState, ReferenceTrajectory, tracking_command
from .geometry import (
    DynamicObstacle,
    OccupancyGrid,
    Pose,
    footprint_at,
    polygon_hits_grid,
    polygon_hits_polyline,
    wrap_angle,
)
from .prediction import predict
from .speed_search import (
    SpeedGrid,
    ThresholdFunction,
    brute_force_safe_speed,
    find_safe_speed,
    threshold,
)
from .vehicle import ControlCommand, VehicleParams, VehicleState, step


class ScenarioError(Exception):
    """Base of all scenario loading and validation failures."""


class ScenarioFileError(ScenarioError):
    """A referenced file is missing or unreadable."""


class ScenarioFieldError(ScenarioError):
    """A field is missing, of the wrong type, or out of range."""


class ScenarioValidationError(ScenarioError):
    """Individually valid fields that are inconsistent with each other."""


@dataclass(frozen=True)
class LocalizationConfig:
    """Gaussian pose-cloud emulation around the true pose.

    Jumps mimic particle-filter resampling artifacts: every jump_period seconds
    the cloud center departs by jump_magnitude in a seeded random direction and
    relaxes back with time constant jump_decay.
    """

    sigma_x: float = 0.1
    sigma_y: float = 0.1
    sigma_yaw: float = 0.02
    particles: int = 30
    jump_period: float = 0.0
    jump_magnitude: float = 0.0
    jump_decay: float = 0.8

    def __post_init__(self):
        for name in ("sigma_x", "sigma_y", "sigma_yaw", "jump_period", "jump_magnitude"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.particles < 1:
            raise ValueError("particles must be at least 1")
        if self.jump_decay <= 0.0:
            raise ValueError("jump_decay must be positive")


@dataclass(frozen=True)
class ActuationNoise:
    accel_sigma: float = 0.0
    steer_sigma: float = 0.0

    def __post_init__(self):
        if self.accel_sigma < 0.0 or self.steer_sigma < 0.0:
            raise ValueError("noise sigmas must be non-negative")


@dataclass(frozen=True)
class PredictionConfig:
    tau: float = 3.0
    dt: float = 0.05

    def __post_init__(self):
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")
        if not (0.0 < self.dt <= self.tau):
            raise ValueError("dt must satisfy 0 < dt <= tau")


@dataclass(frozen=True)
class MapObstacle:
    """Obstacle polyline in map coordinates with an optional presence window.

    The harness plays detector: while present, the polyline is re-expressed in
    the true vehicle frame each tick and handed to the limiter as a detection.
    """

    vertices: tuple[tuple[float, float], ...]
    appear: float = 0.0
    vanish: float = math.inf

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ValueError("obstacle needs at least 2 vertices")
        if self.vanish <= self.appear:
            raise ValueError("vanish must be later than appear")


@dataclass(frozen=True)
class Scenario:
    name: str
    grid: OccupancyGrid
    reference: ReferenceTrajectory
    params: VehicleParams
    gains: ControllerGains
    prediction: PredictionConfig
    localization: LocalizationConfig
    actuation: ActuationNoise
    threshold: ThresholdFunction
    obstacles: tuple[MapObstacle, ...]
    v_max: float
    speed_levels: int
    control_period: float
    duration: float
    seed: int
    start: tuple[float, float, float] | None = None
    search: str = "binary"
    heatmap: bool = True

    def start_state(self) -> VehicleState:
        if self.start is not None:
            x, y, yaw = self.start
            return VehicleState(Pose(x, y, yaw))
        (ax, ay), (bx, by) = self.reference.waypoints[0], self.reference.waypoints[1]
        return VehicleState(Pose(ax, ay, math.atan2(by - ay, bx - ax)))

    def speed_grid(self) -> SpeedGrid:
        return SpeedGrid(self.v_max, self.speed_levels)


@dataclass(frozen=True)
class TickRecord:
    t: float
    true_pose: Pose
    est_pose: Pose
    ess: float
    v_s: float
    v_cmd: float
    v_actual: float
    p_static: float
    p_dynamic: float
    p_total: float
    unsafe_at_rest: bool
    heatmap: tuple[float, ...]


@dataclass
class RunLog:
    scenario: str
    levels: tuple[float, ...]
    ticks: list[TickRecord] = field(default_factory=list)
    collided: bool = False
    collision_time: float | None = None

    def jerk_mean_abs_dv(self) -> float:
        """Mean absolute change of the applied limit between consecutive ticks."""
        if len(self.ticks) < 2:
            return 0.0
        total = 0.0
        for a, b in zip(self.ticks, self.ticks[1:]):
            total += abs(b.v_s - a.v_s)
        return total / (len(self.ticks) - 1)


# ---------------------------------------------------------------------------
# Scenario loading

_REQUIRED = object()


def _lookup(data: dict, path: str, default=_REQUIRED):
    node = data
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is _REQUIRED:
                raise ScenarioFieldError(f"{path}: required field is missing")
            return default
        node = node[part]
    return node


def _number(data: dict, path: str, default=_REQUIRED) -> float:
    v = _lookup(data, path, default)
    if v is default and default is not _REQUIRED:
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioFieldError(f"{path}: expected a number, got {v!r}")
    return float(v)


def _integer(data: dict, path: str, default=_REQUIRED) -> int:
    v = _lookup(data, path, default)
    if v is default and default is not _REQUIRED:
        return v
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioFieldError(f"{path}: expected an integer, got {v!r}")
    return v


def _point_list(data: dict, path: str):
    v = _lookup(data, path)
    if not isinstance(v, list) or not all(
        isinstance(p, (list, tuple)) and len(p) == 2 for p in v
    ):
        raise ScenarioFieldError(f"{path}: expected a list of [x, y] pairs")
    return [(float(p[0]), float(p[1])) for p in v]


def _build(factory, path_prefix: str, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as e:
        raise ScenarioFieldError(f"{path_prefix}: {e}") from e


def load_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file.

    Raises ScenarioFileError when the scenario or its grid image is missing,
    ScenarioFieldError for malformed fields, and ScenarioValidationError when
    fields are individually fine but mutually inconsistent.  Every message
    names the offending field.
    """
    path = Path(path)
    if not path.is_file():
        raise ScenarioFileError(f"scenario file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ScenarioFieldError(f"scenario file {path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ScenarioFieldError(f"scenario file {path} must hold a key-value mapping")

    name = str(_lookup(data, "name", path.stem))

    grid_file = _lookup(data, "grid.file")
    if not isinstance(grid_file, str):
        raise ScenarioFieldError("grid.file: expected a path string")
    grid_path = Path(grid_file)
    if not grid_path.is_absolute():
        grid_path = path.parent / grid_path
    if not grid_path.is_file():
        raise ScenarioFileError(f"grid.file: {grid_path} does not exist")
    resolution = _number(data, "grid.resolution")
    origin_raw = _lookup(data, "grid.origin", [0.0, 0.0, 0.0])
    if not isinstance(origin_raw, list) or len(origin_raw) != 3:
        raise ScenarioFieldError("grid.origin: expected [x, y, yaw]")
    cutoff = _number(data, "grid.occupied_below", None)
    try:
        grid = OccupancyGrid.from_pgm(
            grid_path, resolution, Pose(*[float(v) for v in origin_raw]), cutoff
        )
    except ValueError as e:
        raise ScenarioFileError(f"grid.file: {e}") from e

    waypoints = _point_list(data, "reference.waypoints")
    speeds_raw = _lookup(data, "reference.speeds", None)
    speeds = None
    if speeds_raw is not None:
        if not isinstance(speeds_raw, list):
            raise ScenarioFieldError("reference.speeds: expected a list of numbers")
        speeds = tuple(float(v) for v in speeds_raw)
    reference = _build(ReferenceTrajectory, "reference", waypoints=tuple(waypoints), speeds=speeds)

    params = _build(
        VehicleParams, "vehicle",
        wheelbase=_number(data, "vehicle.wheelbase", 1.0),
        max_steer=_number(data, "vehicle.max_steer", 0.6),
        max_steer_rate=_number(data, "vehicle.max_steer_rate", 1.2),
        max_accel=_number(data, "vehicle.max_accel", 1.5),
        max_decel=_number(data, "vehicle.max_decel", 2.0),
        length=_number(data, "vehicle.length", 1.5),
        width=_number(data, "vehicle.width", 0.8),
        v_max_capability=_number(data, "vehicle.v_max_capability", 4.5),
    )
    gains = _build(
        ControllerGains, "gains",
        k_v=_number(data, "gains.k_v", 0.5),
        l_min=_number(data, "gains.l_min", 0.5),
        l_max=_number(data, "gains.l_max", 3.0),
        k_p=_number(data, "gains.k_p", 1.5),
    )
    prediction = _build(
        PredictionConfig, "prediction",
        tau=_number(data, "prediction.tau", 3.0),
        dt=_number(data, "prediction.dt", 0.05),
    )
    localization = _build(
        LocalizationConfig, "localization",
        sigma_x=_number(data, "localization.sigma_x", 0.1),
        sigma_y=_number(data, "localization.sigma_y", 0.1),
        sigma_yaw=_number(data, "localization.sigma_yaw", 0.02),
        particles=_integer(data, "localization.particles", 30),
        jump_period=_number(data, "localization.jump_period", 0.0),
        jump_magnitude=_number(data, "localization.jump_magnitude", 0.0),
        jump_decay=_number(data, "localization.jump_decay", 0.8),
    )
    actuation = _build(
        ActuationNoise, "actuation_noise",
        accel_sigma=_number(data, "actuation_noise.accel_sigma", 0.0),
        steer_sigma=_number(data, "actuation_noise.steer_sigma", 0.0),
    )
    tf = _build(
        ThresholdFunction, "threshold",
        kind=_threshold_kind(_lookup(data, "threshold.kind", "constant")),
        p0=_number(data, "threshold.p0", 0.2),
        k=_number(data, "threshold.k", 0.0),
        p_floor=_number(data, "threshold.p_floor", 0.0),
    )

    obstacles = []
    obs_raw = _lookup(data, "obstacles", [])
    if not isinstance(obs_raw, list):
        raise ScenarioFieldError("obstacles: expected a list")
    for idx, entry in enumerate(obs_raw):
        prefix = f"obstacles[{idx}]"
        if not isinstance(entry, dict):
            raise ScenarioFieldError(f"{prefix}: expected a mapping with 'vertices'")
        verts = _point_list(entry, "vertices")
        obstacles.append(
            _build(
                MapObstacle, prefix,
                vertices=tuple(verts),
                appear=_number(entry, "appear", 0.0),
                vanish=_number(entry, "vanish", math.inf),
            )
        )

    v_max = _number(data, "v_max")
    if v_max <= 0.0:
        raise ScenarioFieldError("v_max: must be positive")
    speed_levels = _integer(data, "speed_levels", 41)
    if speed_levels < 2:
        raise ScenarioFieldError("speed_levels: need at least 2")
    control_period = _number(data, "control_period", 0.1)
    if control_period <= 0.0:
        raise ScenarioFieldError("control_period: must be positive")
    duration = _number(data, "duration")
    if duration <= 0.0:
        raise ScenarioFieldError("duration: must be positive")
    seed = _integer(data, "seed", 0)
    search = _lookup(data, "search", "binary")
    if search not in ("binary", "scan"):
        raise ScenarioFieldError("search: must be 'binary' or 'scan'")
    heatmap = _lookup(data, "heatmap", True)
    if not isinstance(heatmap, bool):
        raise ScenarioFieldError("heatmap: must be true or false")
    start_raw = _lookup(data, "start", None)
    start = None
    if start_raw is not None:
        if not isinstance(start_raw, list) or len(start_raw) != 3:
            raise ScenarioFieldError("start: expected [x, y, yaw]")
        start = tuple(float(v) for v in start_raw)

    scenario = Scenario(
        name=name, grid=grid, reference=reference, params=params, gains=gains,
        prediction=prediction, localization=localization, actuation=actuation,
        threshold=tf, obstacles=tuple(obstacles), v_max=v_max,
        speed_levels=speed_levels, control_period=control_period,
        duration=duration, seed=seed, start=start, search=search, heatmap=heatmap,
    )
    validate_scenario(scenario)
    return scenario


def _threshold_kind(kind) -> str:
    if not isinstance(kind, str):
        raise ScenarioFieldError("threshold.kind: expected a string")
    return {"exp": "exponential"}.get(kind, kind)


def validate_scenario(sc: Scenario) -> None:
    """Cross-field consistency checks; raises ScenarioValidationError."""
    stop_time = sc.v_max / sc.params.max_decel
    if sc.prediction.tau < stop_time:
        raise ScenarioValidationError(
            f"prediction.tau: horizon {sc.prediction.tau} s is shorter than the "
            f"stop time v_max/max_decel = {stop_time} s, so rollouts could not "
            "cover the braking maneuver"
        )
    gap = sc.v_max * sc.prediction.dt
    if sc.params.length <= gap:
        raise ScenarioValidationError(
            f"vehicle.length: footprint length {sc.params.length} m must exceed "
            f"the worst-case travel between rollout samples v_max*dt = {gap} m "
            "or the grid check could tunnel through obstacles"
        )
    if sc.v_max > sc.params.v_max_capability:
        raise ScenarioValidationError(
            f"v_max: {sc.v_max} m/s exceeds vehicle.v_max_capability "
            f"{sc.params.v_max_capability} m/s"
        )


# ---------------------------------------------------------------------------
# Localization emulation

def emulate_localization(center: Pose, cfg: LocalizationConfig,
                         rng: np.random.Generator) -> WeightedParticleSet:
    """Sample a uniform-weight Gaussian pose cloud around a center pose.

    The estimated pose is the weighted mean with a circular mean for yaw.  With
    zero sigmas every particle and the estimate equal the center exactly.
    """
    n = cfg.particles
    dx = rng.normal(0.0, cfg.sigma_x, n)
    dy = rng.normal(0.0, cfg.sigma_y, n)
    dyaw = rng.normal(0.0, cfg.sigma_yaw, n)
    particles = tuple(
        (Pose(center.x + dx[i], center.y + dy[i], wrap_angle(center.yaw + dyaw[i])), 1.0)
        for i in range(n)
    )
    yaw_mean = math.atan2(float(np.mean(np.sin(dyaw))), float(np.mean(np.cos(dyaw))))
    est = Pose(
        center.x + float(np.mean(dx)),
        center.y + float(np.mean(dy)),
        wrap_angle(center.yaw + yaw_mean),
    )
    return WeightedParticleSet(particles, est)


class LocalizationEmulator:
    """Cloud sampler with a precomputed resampling-jump schedule.

    Jump times and directions are drawn once from the dedicated stream so the
    offset at any tick is a pure function of time.
    """

    def __init__(self, cfg: LocalizationConfig, duration: float, rng: np.random.Generator):
        self.cfg = cfg
        self._jumps: list[tuple[float, float, float]] = []
        if cfg.jump_period > 0.0 and cfg.jump_magnitude > 0.0:
            t = cfg.jump_period
            while t <= duration:
                angle = rng.uniform(0.0, 2.0 * math.pi)
                self._jumps.append(
                    (t, cfg.jump_magnitude * math.cos(angle), cfg.jump_magnitude * math.sin(angle))
                )
                t += cfg.jump_period

    def offset(self, t: float) -> tuple[float, float]:
        ox = 0.0
        oy = 0.0
        for tj, jx, jy in self._jumps:
            if t >= tj:
                decay = math.exp(-(t - tj) / self.cfg.jump_decay)
                ox += jx * decay
                oy += jy * decay
        return ox, oy

    def sample(self, true_pose: Pose, t: float, rng: np.random.Generator) -> WeightedParticleSet:
        ox, oy = self.offset(t)
        center = Pose(true_pose.x + ox, true_pose.y + oy, true_pose.yaw)
        return emulate_localization(center, self.cfg, rng)


# ---------------------------------------------------------------------------
# The drive loop

def _detected(obstacles, t: float, pose: Pose) -> tuple[DynamicObstacle, ...]:
    """Obstacles present at time t, re-expressed in the given vehicle frame."""
    out = []
    c = math.cos(pose.yaw)
    s = math.sin(pose.yaw)
    for obs in obstacles:
        if obs.appear <= t < obs.vanish:
            rel = tuple(
                ((vx - pose.x) * c + (vy - pose.y) * s,
                 -(vx - pose.x) * s + (vy - pose.y) * c)
                for vx, vy in obs.vertices
            )
            out.append(DynamicObstacle(rel))
    return tuple(out)


def run(sc: Scenario, workers: int = 1) -> RunLog:
    """Simulate a scenario and log every control tick.

    The log is bit-identical for a fixed seed no matter how often the run is
    repeated or how many worker threads evaluate the speed grid: every level's
    assessment is independent and results are reduced in level order.  The run
    halts early if the ground-truth vehicle actually collides; that is reported
    in the log, not raised.
    """
    grid = sc.grid
    ref = sc.reference
    params = sc.params
    gains = sc.gains
    tau = sc.prediction.tau
    dt = sc.prediction.dt
    tf = sc.threshold
    speed_grid = sc.speed_grid()
    levels = speed_grid.all_levels()
    fp = params.footprint()
    fp_local = footprint_at(Pose(), fp)

    seq_jump, seq_loc, seq_act = np.random.SeedSequence(sc.seed).spawn(3)
    emulator = LocalizationEmulator(sc.localization, sc.duration, np.random.default_rng(seq_jump))
    rng_loc = np.random.default_rng(seq_loc)
    rng_act = np.random.default_rng(seq_act)

    state = sc.start_state()
    ctl = ControllerState(0)
    log = RunLog(sc.name, levels)
    n_ticks = int(math.floor(sc.duration / sc.control_period + 1e-9))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    thr0 = threshold(tf, 0.0)
    try:
        for i in range(n_ticks):
            t = i * sc.control_period
            cloud = emulator.sample(state.pose, t, rng_loc)
            est = VehicleState(cloud.estimated_pose, state.speed, state.steering)
            detections = _detected(sc.obstacles, t, state.pose)
            start_index = ctl.index
            reports: dict[float, CollisionReport] = {}

            def evaluate(v_lim: float) -> CollisionReport:
                base = predict(est, ref, v_lim, tau, dt, params, gains, start_index)
                return assess(cloud, base, grid, fp, ref, v_lim, tau, dt, detections,
                              params, gains, est.speed, est.steering, start_index)

            if sc.heatmap:
                if pool is not None:
                    results = list(pool.map(evaluate, levels))
                else:
                    results = [evaluate(v) for v in levels]
                reports.update(zip(levels, results))

            def p_total(v_lim: float) -> float:
                report = reports.get(v_lim)
                if report is None:
                    report = evaluate(v_lim)
                    reports[v_lim] = report
                return report.p_total

            if sc.search == "scan":
                v_s = brute_force_safe_speed(p_total, tf, speed_grid)
            else:
                v_s, _ = find_safe_speed(p_total, tf, speed_grid)
            chosen = reports[v_s]
            unsafe_at_rest = v_s == 0.0 and reports[0.0].p_total >= thr0
            heat = tuple(reports[v].p_total for v in levels) if sc.heatmap else ()

            steer, accel, v_cmd = tracking_command(est, v_s, ref, gains, params, ctl)
            steer += rng_act.normal(0.0, sc.actuation.steer_sigma)
            accel += rng_act.normal(0.0, sc.actuation.accel_sigma)

            log.ticks.append(TickRecord(
                t=t, true_pose=state.pose, est_pose=cloud.estimated_pose,
                ess=cloud.effective_sample_size(), v_s=v_s, v_cmd=v_cmd,
                v_actual=state.speed, p_static=chosen.p_static,
                p_dynamic=chosen.p_dynamic, p_total=chosen.p_total,
                unsafe_at_rest=unsafe_at_rest, heatmap=heat,
            ))

            state = step(state, ControlCommand(accel, steer), sc.control_period, params)
            t_next = (i + 1) * sc.control_period
            poly = footprint_at(state.pose, fp)
            hit = polygon_hits_grid(poly, grid)
            if not hit:
                for obs in _detected(sc.obstacles, t_next, state.pose):
                    if polygon_hits_polyline(fp_local, obs):
                        hit = True
                        break
            if hit:
                log.collided = True
                log.collision_time = t_next
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return log


# ---------------------------------------------------------------------------
# Output files

def _fmt(x: float) -> str:
    return repr(float(x))


def write_outputs(log: RunLog, out_dir) -> dict[str, Path]:
    """Write run.csv, heatmap.csv and path_speed.csv into a directory.

    Formatting is repr-based so identical logs serialize to identical bytes.
    heatmap.csv is only produced when the run recorded the full grid sweep.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    paths: dict[str, Path] = {}

    run_path = out / "run.csv"
    cols = [
        "time", "true_x", "true_y", "true_yaw", "est_x", "est_y", "est_yaw",
        "ess", "v_s", "v_cmd", "v_actual", "p_static", "p_dynamic", "p_total",
        "unsafe_at_rest",
    ]
    lines = [",".join(cols)]
    for tk in log.ticks:
        lines.append(",".join([
            _fmt(tk.t), _fmt(tk.true_pose.x), _fmt(tk.true_pose.y), _fmt(tk.true_pose.yaw),
            _fmt(tk.est_pose.x), _fmt(tk.est_pose.y), _fmt(tk.est_pose.yaw),
            _fmt(tk.ess), _fmt(tk.v_s), _fmt(tk.v_cmd), _fmt(tk.v_actual),
            _fmt(tk.p_static), _fmt(tk.p_dynamic), _fmt(tk.p_total),
            "1" if tk.unsafe_at_rest else "0",
        ]))
    lines.append(f"# collided,{'true' if log.collided else 'false'}")
    lines.append(f"# jerk_mean_abs_dv,{_fmt(log.jerk_mean_abs_dv())}")
    run_path.write_text("\n".join(lines) + "\n")
    paths["run"] = run_path

    if all(tk.heatmap for tk in log.ticks):
        heat_path = out / "heatmap.csv"
        lines = [",".join(["time"] + [_fmt(v) for v in log.levels])]
        for tk in log.ticks:
            lines.append(",".join([_fmt(tk.t)] + [_fmt(p) for p in tk.heatmap]))
        heat_path.write_text("\n".join(lines) + "\n")
        paths["heatmap"] = heat_path

    path_path = out / "path_speed.csv"
    lines = ["x,y,speed"]
    for tk in log.ticks:
        lines.append(",".join([_fmt(tk.true_pose.x), _fmt(tk.true_pose.y), _fmt(tk.v_actual)]))
    path_path.write_text("\n".join(lines) + "\n")
    paths["path_speed"] = path_path
    return paths
