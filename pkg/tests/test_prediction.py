"""Closed-loop rollout: shape, determinism, speed compliance."""

import math

import numpy as np
import pytest

from safespeed import (
    ControllerGains,
    Pose,
    ReferenceTrajectory,
    VehicleParams,
    VehicleState,
    predict,
)

STRAIGHT = ReferenceTrajectory(((0.0, 0.0), (200.0, 0.0)))


def test_predict_validates_horizon_and_step():
    st = VehicleState(Pose())
    args = (STRAIGHT, 1.0)
    with pytest.raises(ValueError, match="tau"):
        predict(st, *args, 0.0, 0.05, VehicleParams(), ControllerGains())
    with pytest.raises(ValueError, match="dt"):
        predict(st, *args, 2.0, 0.0, VehicleParams(), ControllerGains())
    with pytest.raises(ValueError, match="dt"):
        predict(st, *args, 2.0, 3.0, VehicleParams(), ControllerGains())
    with pytest.raises(ValueError, match="v_lim"):
        predict(st, STRAIGHT, -1.0, 2.0, 0.05, VehicleParams(), ControllerGains())


def test_sample_count_and_timestamps():
    st = VehicleState(Pose())
    for tau, dt in ((3.0, 0.05), (2.5, 0.1), (1.0, 0.3), (0.05, 0.05)):
        traj = predict(st, STRAIGHT, 1.0, tau, dt, VehicleParams(), ControllerGains())
        n = math.ceil(tau / dt)
        assert len(traj.samples) == n + 1
        assert traj.samples[0].t == 0.0
        for k, sample in enumerate(traj.samples):
            assert sample.t == pytest.approx(k * dt, abs=1e-12)
        assert traj.horizon == tau
        assert traj.samples[-1].t >= tau - dt


def test_parked_vehicle_stays_parked():
    start = Pose(3.0, 1.0, 0.2)
    traj = predict(VehicleState(start), STRAIGHT, 0.0, 2.0, 0.05, VehicleParams(), ControllerGains())
    for sample in traj.samples:
        assert sample.pose == start
        assert sample.speed == 0.0


def test_first_sample_is_the_start_state_exactly():
    start = VehicleState(Pose(4.0, -0.3, 0.1), speed=1.7, steering=0.05)
    traj = predict(start, STRAIGHT, 2.0, 3.0, 0.05, VehicleParams(), ControllerGains())
    assert traj.start_pose == start.pose
    assert traj.samples[0].speed == start.speed


def test_straight_rollout_matches_hand_integrated_profile():
    """Aligned start on a long straight: cross-track stays sub-mm and the
    forward distance equals the independently integrated P-loop profile."""
    params = VehicleParams()
    gains = ControllerGains()
    v_lim, tau, dt = 1.0, 2.0, 0.05
    st = VehicleState(Pose(0.0, 0.0, 0.0), speed=0.0)
    traj = predict(st, STRAIGHT, v_lim, tau, dt, params, gains)

    v = 0.0
    x = 0.0
    for sample in traj.samples[1:]:
        a = min(max(gains.k_p * (v_lim - v), -params.max_decel), params.max_accel)
        v = max(v + a * dt, 0.0)
        x += v * dt
        assert sample.speed == pytest.approx(v, abs=1e-12)
        assert sample.pose.x == pytest.approx(x, abs=1e-9)
        assert abs(sample.pose.y) < 1e-3
    # Spin-up keeps the total short of v_lim * tau.
    assert traj.samples[-1].pose.x < v_lim * tau


def test_predict_is_deterministic():
    st = VehicleState(Pose(1.0, 0.4, 0.03), speed=2.0)
    a = predict(st, STRAIGHT, 3.0, 2.5, 0.05, VehicleParams(), ControllerGains())
    b = predict(st, STRAIGHT, 3.0, 2.5, 0.05, VehicleParams(), ControllerGains())
    for sa, sb in zip(a.samples, b.samples):
        assert (sa.t, sa.pose.x, sa.pose.y, sa.pose.yaw, sa.speed) == (
            sb.t, sb.pose.x, sb.pose.y, sb.pose.yaw, sb.speed,
        )


def _random_rollout(rng):
    waypoints = [(0.0, 0.0)]
    x, y = 0.0, 0.0
    heading = 0.0
    for _ in range(int(rng.integers(2, 6))):
        heading += float(rng.uniform(-0.8, 0.8))
        d = float(rng.uniform(3.0, 10.0))
        x += d * math.cos(heading)
        y += d * math.sin(heading)
        waypoints.append((x, y))
    ref = ReferenceTrajectory(tuple(waypoints))
    params = VehicleParams()
    gains = ControllerGains()
    v_lim = float(rng.uniform(0.0, 4.5))
    start = VehicleState(
        Pose(float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.4, 0.4))),
        speed=float(rng.uniform(0.0, min(v_lim + 0.0, 4.0))),
    )
    return predict(start, ref, v_lim, 2.5, 0.05, params, gains), v_lim


def test_sample_speeds_respect_the_limit():
    rng = np.random.default_rng(31)
    for _ in range(50):
        traj, v_lim = _random_rollout(rng)
        for sample in traj.samples:
            assert sample.speed <= v_lim + 0.05


def test_arc_length_grows_with_the_limit():
    rng = np.random.default_rng(32)
    params = VehicleParams()
    gains = ControllerGains()
    for _ in range(40):
        v1, v2 = np.sort(rng.uniform(0.0, 4.0, 2)).tolist()
        start = VehicleState(Pose(0.0, float(rng.uniform(-0.3, 0.3)), 0.0), speed=float(rng.uniform(0.0, 2.0)))
        a = predict(start, STRAIGHT, v1, 2.5, 0.05, params, gains)
        b = predict(start, STRAIGHT, v2, 2.5, 0.05, params, gains)
        assert a.path_length() <= b.path_length() + 1e-6


def test_pose_arrays_cache_matches_samples():
    traj = predict(VehicleState(Pose(), speed=1.0), STRAIGHT, 2.0, 1.0, 0.1, VehicleParams(), ControllerGains())
    px, py, pyaw = traj.pose_arrays()
    assert px.shape == (len(traj.samples),)
    for k, sample in enumerate(traj.samples):
        assert (px[k], py[k], pyaw[k]) == (sample.pose.x, sample.pose.y, sample.pose.yaw)
