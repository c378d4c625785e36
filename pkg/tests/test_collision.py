"""Collision probability over the hypothesis cloud, checked against oracles."""

import math

import numpy as np
import pytest
from shapely.geometry import LineString, Polygon

from safespeed import (
    ControllerGains,
    DynamicObstacle,
    OccupancyGrid,
    Pose,
    PredictedTrajectory,
    ReferenceTrajectory,
    TrajectorySample,
    VehicleParams,
    WeightedParticleSet,
    assess,
    combine,
    dynamic_probability,
    static_probability,
    trajectory_collides_static,
)
from safespeed.geometry import Footprint

from oracles import GridOracle, random_scene, relative_pose, rigid_apply, scene_to_package, static_oracle


# ---------------------------------------------------------------------------
# combine

def test_combine_examples():
    assert combine(0.0, 0.0) == 0.0
    assert combine(1.0, 0.3) == 1.0
    assert combine(0.3, 1.0) == 1.0
    assert combine(0.5, 0.5) == pytest.approx(0.75, abs=1e-15)


def test_combine_laws():
    rng = np.random.default_rng(41)
    for _ in range(2000):
        a, b, c = rng.uniform(0.0, 1.0, 3).tolist()
        assert combine(a, b) == pytest.approx(1.0 - (1.0 - a) * (1.0 - b), abs=1e-15)
        assert combine(a, b) == combine(b, a)
        assert combine(a, 0.0) == pytest.approx(a, abs=1e-15)
        assert combine(a, 1.0) == 1.0
        if b <= c:
            assert combine(a, b) <= combine(a, c) + 1e-15
        assert 0.0 <= combine(a, b) <= 1.0


def test_combine_rejects_out_of_range():
    with pytest.raises(ValueError):
        combine(-0.1, 0.5)
    with pytest.raises(ValueError):
        combine(0.5, 1.1)


# ---------------------------------------------------------------------------
# Particle set

def test_particle_set_normalizes_and_validates():
    p = Pose()
    ps = WeightedParticleSet(((p, 2.0), (p, 6.0)), p)
    ws = [w for _, w in ps.particles]
    assert ws == pytest.approx([0.25, 0.75])
    with pytest.raises(ValueError, match="empty"):
        WeightedParticleSet((), p)
    with pytest.raises(ValueError, match="non-negative"):
        WeightedParticleSet(((p, -1.0),), p)
    with pytest.raises(ValueError, match="positive sum"):
        WeightedParticleSet(((p, 0.0), (p, 0.0)), p)
    with pytest.raises(ValueError, match="finite"):
        WeightedParticleSet(((p, math.inf),), p)


def test_effective_sample_size():
    p = Pose()
    assert WeightedParticleSet(((p, 1.0),), p).effective_sample_size() == pytest.approx(1.0)
    uniform = WeightedParticleSet(tuple((p, 1.0) for _ in range(25)), p)
    assert uniform.effective_sample_size() == pytest.approx(25.0)
    skewed = WeightedParticleSet(((p, 0.9), (p, 0.1)), p)
    assert skewed.effective_sample_size() == pytest.approx(1.0 / (0.81 + 0.01))


# ---------------------------------------------------------------------------
# Static probability

def _one_cell_world():
    """10 m free square with one occupied cell [1.0, 1.5]^2."""
    cells = np.zeros((20, 20), dtype=bool)
    cells[2, 2] = True
    return OccupancyGrid(cells, 0.5)


def _still_trajectory(pose: Pose) -> PredictedTrajectory:
    samples = (TrajectorySample(0.0, pose, 0.0), TrajectorySample(0.1, pose, 0.0))
    return PredictedTrajectory(samples, 0.1)


FP = Footprint.rectangle(0.4, 0.4)
ON_CELL = Pose(1.25, 1.25, 0.0)
CLEAR = Pose(5.0, 5.0, 0.0)


def test_static_probability_equal_weight_arithmetic():
    grid = _one_cell_world()
    est = CLEAR
    particles = tuple(
        (ON_CELL if i < 3 else Pose(5.0 + 0.1 * i, 5.0, 0.0), 1.0) for i in range(10)
    )
    ps = WeightedParticleSet(particles, est)
    p, flags = static_probability(ps, _still_trajectory(est), grid, FP)
    assert p == pytest.approx(0.3, abs=1e-12)
    assert [f[0] for f in flags] == [True] * 3 + [False] * 7
    for hit, t in flags[:3]:
        assert t == 0.0
    for hit, t in flags[3:]:
        assert t is None


def test_static_probability_weighted_arithmetic():
    grid = _one_cell_world()
    est = CLEAR
    ps = WeightedParticleSet(
        ((ON_CELL, 0.5), (CLEAR, 0.3), (ON_CELL, 0.2)), est
    )
    p, flags = static_probability(ps, _still_trajectory(est), grid, FP)
    assert p == pytest.approx(0.7, abs=1e-12)
    assert [f[0] for f in flags] == [True, False, True]


def test_static_probability_rejects_mismatched_start():
    grid = _one_cell_world()
    ps = WeightedParticleSet(((CLEAR, 1.0),), CLEAR)
    with pytest.raises(ValueError, match="estimated pose"):
        static_probability(ps, _still_trajectory(Pose(5.1, 5.0, 0.0)), grid, FP)


def test_single_exact_particle_is_the_boolean_indicator():
    grid = _one_cell_world()
    for pose in (CLEAR, ON_CELL):
        traj = _still_trajectory(pose)
        ps = WeightedParticleSet(((pose, 1.0),), pose)
        p, _ = static_probability(ps, traj, grid, FP)
        hit, t = trajectory_collides_static(traj, grid, FP)
        assert p == (1.0 if hit else 0.0)
        assert (t == 0.0) == hit


def test_trajectory_collides_static_reports_earliest_time():
    grid = _one_cell_world()
    # March rightward through the occupied square in 0.25 m steps from x=0.25.
    samples = tuple(
        TrajectorySample(0.1 * k, Pose(0.25 + 0.25 * k, 1.25, 0.0), 1.0) for k in range(10)
    )
    traj = PredictedTrajectory(samples, 0.9)
    hit, t = trajectory_collides_static(traj, grid, FP)
    assert hit
    # Footprint half-length 0.2 first touches x=1.0 at sample x=0.8, k=3 wait:
    # x = 0.25 + 0.25k reaches 0.8 at no integer k; first x with x+0.2 >= 1.0
    # is x = 1.0 at k = 3.
    assert t == pytest.approx(0.1 * 3)


def test_empty_grid_never_collides():
    grid = OccupancyGrid(np.zeros((20, 20), dtype=bool), 0.5)
    traj = _still_trajectory(CLEAR)
    assert trajectory_collides_static(traj, grid, FP) == (False, None)


def test_out_of_grid_counts_as_collision():
    grid = OccupancyGrid(np.zeros((20, 20), dtype=bool), 0.5)
    traj = _still_trajectory(Pose(0.1, 5.0, 0.0))  # footprint pokes past x=0
    hit, t = trajectory_collides_static(traj, grid, FP)
    assert hit and t == 0.0


def test_static_probability_matches_naive_oracle_small():
    rng = np.random.default_rng(42)
    for _ in range(15):
        grid, fp, particles, est, samples = random_scene(rng, max_particles=40)
        ps, traj = scene_to_package(particles, est, samples)
        p_got, flags_got = static_probability(ps, traj, grid, fp)
        p_want, flags_want = static_oracle(particles, est, samples, fp.vertices, GridOracle(grid))
        assert p_got == pytest.approx(p_want, abs=1e-12)
        assert [f[0] for f in flags_got] == [f[0] for f in flags_want]
        assert [f[1] for f in flags_got] == [f[1] for f in flags_want]


def test_static_probability_particle_order_invariance():
    rng = np.random.default_rng(43)
    grid, fp, particles, est, samples = random_scene(rng, max_particles=60)
    ps, traj = scene_to_package(particles, est, samples)
    p1, _ = static_probability(ps, traj, grid, fp)
    perm = rng.permutation(len(particles)).tolist()
    shuffled = [particles[i] for i in perm]
    ps2, _ = scene_to_package(shuffled, est, samples)
    p2, _ = static_probability(ps2, traj, grid, fp)
    assert p2 == pytest.approx(p1, abs=1e-12)


def test_static_probability_split_particle_invariance():
    grid = _one_cell_world()
    est = CLEAR
    ps = WeightedParticleSet(((ON_CELL, 0.4), (CLEAR, 0.6)), est)
    split = WeightedParticleSet(((ON_CELL, 0.2), (ON_CELL, 0.2), (CLEAR, 0.6)), est)
    traj = _still_trajectory(est)
    p1, _ = static_probability(ps, traj, grid, FP)
    p2, _ = static_probability(split, traj, grid, FP)
    assert p2 == pytest.approx(p1, abs=1e-12)


def test_static_probability_weight_scale_invariance():
    grid = _one_cell_world()
    est = CLEAR
    a = WeightedParticleSet(((ON_CELL, 0.25), (CLEAR, 0.75)), est)
    b = WeightedParticleSet(((ON_CELL, 0.25 * 7.3), (CLEAR, 0.75 * 7.3)), est)
    traj = _still_trajectory(est)
    pa, _ = static_probability(a, traj, grid, FP)
    pb, _ = static_probability(b, traj, grid, FP)
    assert pb == pytest.approx(pa, abs=1e-12)


def test_static_probability_monotone_in_occupancy():
    rng = np.random.default_rng(44)
    for _ in range(10):
        grid, fp, particles, est, samples = random_scene(rng, max_particles=30)
        ps, traj = scene_to_package(particles, est, samples)
        p1, _ = static_probability(ps, traj, grid, fp)
        more = grid.cells.copy()
        extra = rng.integers(0, 50, (40, 2))
        more[extra[:, 0], extra[:, 1]] = True
        p2, _ = static_probability(ps, traj, OccupancyGrid(more, grid.resolution), fp)
        assert p2 >= p1 - 1e-15


def test_all_colliding_cloud_clamps_to_one():
    grid = _one_cell_world()
    ps = WeightedParticleSet(tuple((ON_CELL, 1.0) for _ in range(40)), ON_CELL)
    p, _ = static_probability(ps, _still_trajectory(ON_CELL), grid, FP)
    assert p == 1.0
    combine(p, 0.0)  # still a legal probability


# ---------------------------------------------------------------------------
# Dynamic probability

STRAIGHT = ReferenceTrajectory(((0.0, 0.0), (100.0, 0.0)))
PARAMS = VehicleParams()
GAINS = ControllerGains()


def test_dynamic_probability_no_obstacles():
    ps = WeightedParticleSet(((Pose(), 0.4), (Pose(), 0.6)), Pose())
    p, flags = dynamic_probability(ps, STRAIGHT, 2.0, 2.5, 0.05, (), PARAMS.footprint(), PARAMS, GAINS, 1.0)
    assert p == 0.0
    assert flags == [(False, None), (False, None)]


def test_dynamic_probability_degenerate_cloud_hits_blocker():
    ps = WeightedParticleSet(tuple((Pose(), 1.0) for _ in range(3)), Pose())
    wall = DynamicObstacle(((1.0, -1.0), (1.0, 1.0)))
    p, flags = dynamic_probability(
        ps, STRAIGHT, 2.0, 2.5, 0.05, (wall,), PARAMS.footprint(), PARAMS, GAINS, 2.0
    )
    assert p == 1.0
    assert all(hit for hit, _ in flags)
    assert len({t for _, t in flags}) == 1  # identical rollouts, identical hit time


def test_dynamic_probability_hits_only_the_curving_hypothesis():
    """Two headings: the straight one passes beside the obstacle, the rotated
    one must curve back to the route and sweeps across it."""
    from safespeed import predict, VehicleState

    fp = PARAMS.footprint()
    a = Pose(0.0, 0.0, 0.0)
    b = Pose(0.0, 0.0, math.pi / 2.0)
    ps = WeightedParticleSet(((a, 0.25), (b, 0.75)), a)
    obstacle = DynamicObstacle(((0.8, -2.0), (3.0, -2.0)))

    # Independent check of the construction with shapely, per hypothesis.
    def swath_hits(start: Pose) -> bool:
        traj = predict(VehicleState(start, 2.0), STRAIGHT, 2.0, 2.5, 0.05, PARAMS, GAINS)
        line = LineString(obstacle.vertices)
        s0 = (start.x, start.y, start.yaw)
        for sample in traj.samples:
            rel = relative_pose(s0, (sample.pose.x, sample.pose.y, sample.pose.yaw))
            corners = [rigid_apply(rel[0], rel[1], rel[2], vx, vy) for vx, vy in fp.vertices]
            if Polygon(corners).intersects(line):
                return True
        return False

    assert not swath_hits(a)
    assert swath_hits(b)

    p, flags = dynamic_probability(ps, STRAIGHT, 2.0, 2.5, 0.05, (obstacle,), fp, PARAMS, GAINS, 2.0)
    assert p == pytest.approx(0.75, abs=1e-12)
    assert flags[0] == (False, None)
    assert flags[1][0] and flags[1][1] > 0.0


# ---------------------------------------------------------------------------
# Combined assessment

def test_assess_combines_and_merges_times():
    grid = _one_cell_world()
    est = Pose(5.0, 5.0, 0.0)
    ps = WeightedParticleSet(((ON_CELL, 0.5), (est, 0.5)), est)
    wall = DynamicObstacle(((0.6, -1.0), (0.6, 1.0)))
    report = assess(
        ps, _still_trajectory(est), grid, FP, STRAIGHT, 0.0, 0.5, 0.1, (wall,),
        PARAMS, GAINS, 0.0,
    )
    assert report.p_static == pytest.approx(0.5, abs=1e-12)
    assert report.p_total == combine(report.p_static, report.p_dynamic)
    for outcome in report.per_particle:
        ts = [t for t in (outcome.first_collision_time,) if t is not None]
        if outcome.collides_static or outcome.collides_dynamic:
            assert ts and ts[0] >= 0.0
        else:
            assert outcome.first_collision_time is None


def test_assess_reports_min_of_static_and_dynamic_times():
    # Static hit at t=0 for the first particle; a dynamic wall 1.4 m out is
    # reached later, so the merged time must stay 0 for that particle.
    grid = _one_cell_world()
    ps = WeightedParticleSet(((ON_CELL, 1.0),), ON_CELL)
    samples = tuple(TrajectorySample(0.1 * k, Pose(1.25 + 0.2 * k, 1.25, 0.0), 2.0) for k in range(10))
    traj = PredictedTrajectory(samples, 0.9)
    wall = DynamicObstacle(((1.4, -1.0), (1.4, 1.0)))
    report = assess(
        ps, traj, grid, FP, STRAIGHT, 2.0, 0.9, 0.1, (wall,), PARAMS, GAINS, 2.0,
    )
    outcome = report.per_particle[0]
    assert outcome.collides_static and outcome.collides_dynamic
    assert outcome.first_collision_time == 0.0
