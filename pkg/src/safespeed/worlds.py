"""Built-in benchmark worlds.

Each builder returns a scenario mapping (the same schema load_scenario reads)
plus the occupancy array backing it; materialize() writes both to disk as
scenario.yaml and map.pgm so runs are reproducible from plain files.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import yaml

from .geometry import write_pgm

RESOLUTION = 0.1


def _empty(width_m: float, height_m: float) -> np.ndarray:
    return np.zeros((round(height_m / RESOLUTION), round(width_m / RESOLUTION)), dtype=bool)


def _fill(occ: np.ndarray, x0: float, y0: float, x1: float, y1: float) -> None:
    """Occupy the axis-aligned rectangle; bounds snap to cell edges."""
    ix0 = max(0, round(x0 / RESOLUTION))
    iy0 = max(0, round(y0 / RESOLUTION))
    ix1 = min(occ.shape[1], round(x1 / RESOLUTION))
    iy1 = min(occ.shape[0], round(y1 / RESOLUTION))
    occ[iy0:iy1, ix0:ix1] = True


def _box(occ: np.ndarray, thickness: float = 0.4) -> None:
    h, w = occ.shape
    width_m = w * RESOLUTION
    height_m = h * RESOLUTION
    _fill(occ, 0.0, 0.0, width_m, thickness)
    _fill(occ, 0.0, height_m - thickness, width_m, height_m)
    _fill(occ, 0.0, 0.0, thickness, height_m)
    _fill(occ, width_m - thickness, 0.0, width_m, height_m)


def _base(name: str, waypoints, v_max: float = 4.0, duration: float = 10.0,
          seed: int = 1) -> dict:
    return {
        "name": name,
        "grid": {"file": "map.pgm", "resolution": RESOLUTION},
        "reference": {"waypoints": [[float(x), float(y)] for x, y in waypoints]},
        "prediction": {"tau": 2.5, "dt": 0.05},
        "threshold": {"kind": "constant", "p0": 0.2},
        "v_max": v_max,
        "speed_levels": 41,
        "control_period": 0.1,
        "duration": duration,
        "seed": seed,
    }


def corridor() -> tuple[dict, np.ndarray]:
    """Wide straight corridor, mild noise; the limit should sit at v_max."""
    occ = _empty(32.0, 6.0)
    _box(occ)
    sc = _base("corridor", [(1.8, 3.0), (27.5, 3.0)], duration=10.0, seed=1)
    sc["localization"] = {
        "sigma_x": 0.05, "sigma_y": 0.05, "sigma_yaw": 0.01, "particles": 20,
    }
    return sc, occ


def narrow_gap() -> tuple[dict, np.ndarray]:
    """Corridor pinched by a 1.6 m doorway halfway along the route.

    Pose uncertainty makes the doorway look risky from afar, so the limiter
    has to slow down for the approach and open back up once through.
    """
    occ = _empty(32.0, 8.0)
    _box(occ)
    _fill(occ, 15.0, 0.4, 15.4, 3.2)
    _fill(occ, 15.0, 4.8, 15.4, 7.6)
    sc = _base("narrow_gap", [(1.8, 4.0), (27.5, 4.0)], duration=13.0, seed=7)
    sc["prediction"] = {"tau": 2.5, "dt": 0.1}
    sc["localization"] = {
        "sigma_x": 0.2, "sigma_y": 0.2, "sigma_yaw": 0.05, "particles": 30,
    }
    sc["actuation_noise"] = {"accel_sigma": 0.03, "steer_sigma": 0.004}
    return sc, occ


def u_turn() -> tuple[dict, np.ndarray]:
    """Square U-turn into a dead end, with exact localization (one particle).

    Every probability is exactly 0 or 1.  Approaching the dead end, rollouts
    above a cutoff speed overshoot the stop and clip the wall ahead, so each
    tick's speed sweep is a clean 0-to-1 step at a speed that falls as the
    wall nears.
    """
    occ = _empty(24.0, 14.0)
    _box(occ)
    _fill(occ, 0.4, 6.4, 16.1, 7.6)
    waypoints = [(2.0, 3.4), (17.5, 3.4), (17.5, 10.6), (2.3, 10.6)]
    sc = _base("u_turn", waypoints, duration=16.0, seed=0)
    sc["prediction"] = {"tau": 2.5, "dt": 0.1}
    sc["localization"] = {
        "sigma_x": 0.0, "sigma_y": 0.0, "sigma_yaw": 0.0, "particles": 1,
    }
    return sc, occ


def jumpy_corridor() -> tuple[dict, np.ndarray]:
    """Corridor whose localization estimate re-centers with decaying jumps.

    Each jump teleports the estimate by a fixed magnitude in a random
    direction; big lateral ones push the estimated cloud into a wall, so the
    collision probability saturates for a few ticks and then falls off as the
    offset decays.  A constant threshold slams the limit between 0 and v_max
    at every such event while a decreasing one reacts to the milder
    re-centering wobbles too, which is the trade the threshold comparison in
    the docs measures.  Steering is deliberately soft (low max_steer, long
    lookahead) so chasing a shifted estimate cannot drag the true pose into
    a wall before the offset decays.
    """
    occ = _empty(32.0, 6.0)
    _box(occ)
    _fill(occ, 0.4, 0.4, 31.6, 1.5)
    _fill(occ, 0.4, 4.5, 31.6, 5.6)
    sc = _base("jumpy_corridor", [(1.8, 3.0), (27.5, 3.0)], duration=12.0, seed=3)
    sc["prediction"] = {"tau": 2.5, "dt": 0.1}
    sc["vehicle"] = {"max_accel": 1.0, "max_decel": 3.0, "max_steer": 0.35}
    sc["gains"] = {"k_v": 0.9, "l_min": 1.0}
    sc["localization"] = {
        "sigma_x": 0.1, "sigma_y": 0.1, "sigma_yaw": 0.012, "particles": 150,
        "jump_period": 2.0, "jump_magnitude": 1.25, "jump_decay": 0.8,
    }
    sc["threshold"] = {"kind": "exp", "p0": 0.2, "k": 0.1}
    return sc, occ


WORLDS = {
    "corridor": corridor,
    "narrow_gap": narrow_gap,
    "u_turn": u_turn,
    "jumpy_corridor": jumpy_corridor,
}


def materialize(name: str, out_dir) -> Path:
    """Write a world's map.pgm and scenario.yaml; returns the scenario path."""
    try:
        builder = WORLDS[name]
    except KeyError:
        raise ValueError(f"unknown world {name!r}; have {sorted(WORLDS)}") from None
    sc, occ = builder()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "map.pgm", occ)
    (out / "scenario.yaml").write_text(yaml.safe_dump(sc, sort_keys=False))
    return out / "scenario.yaml"
