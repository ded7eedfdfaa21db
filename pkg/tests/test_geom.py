import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchortraj.geom import (IncomparableTrajectories, PastHistory, Point2, Pose, Trajectory, compose,
                             from_agent_frame, heading_pose, points_from_frame, points_to_frame,
                             to_agent_frame, trajectory_distance, wrap_angle)

coord = st.floats(-100, 100, allow_nan=False)
angle = st.floats(-10, 10, allow_nan=False)


def _rot(a):
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def test_identity_frame_is_noop():
    out = to_agent_frame(Trajectory([(1, 0), (2, 0)]), Pose.identity())
    assert np.array_equal(out.waypoints, [[1, 0], [2, 0]])


def test_quarter_turn_into_agent_frame():
    out = to_agent_frame(Trajectory([(0, 1), (0, 2)]), Pose(Point2(0, 0), math.pi / 2))
    assert np.allclose(out.waypoints, [[1, 0], [2, 0]], atol=1e-15)


def test_from_agent_frame_examples():
    assert np.array_equal(from_agent_frame(Trajectory([(1, 0)]), Pose.identity()).waypoints, [[1, 0]])
    out = from_agent_frame(Trajectory([(1, 0)]), Pose(Point2(5, 5), math.pi / 2))
    assert np.allclose(out.waypoints, [[5, 6]], atol=1e-14)


@given(st.lists(st.tuples(coord, coord), min_size=1, max_size=8), coord, coord, angle)
def test_frame_round_trip(points, x, y, heading):
    traj = Trajectory(points)
    pose = Pose(Point2(x, y), heading)
    back = from_agent_frame(to_agent_frame(traj, pose), pose)
    assert np.max(np.abs(back.waypoints - traj.waypoints)) < 1e-12
    forward = to_agent_frame(from_agent_frame(traj, pose), pose)
    assert np.max(np.abs(forward.waypoints - traj.waypoints)) < 1e-12


@given(angle)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-12)


def test_pose_heading_wrapped_and_finite():
    assert Pose(Point2(0, 0), 3 * math.pi).heading == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        Pose(Point2(math.nan, 0), 0.0)


def test_trajectory_validation_and_immutability():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        Trajectory([(0, 0)], dt=0)
    with pytest.raises(ValueError):
        Trajectory([(math.inf, 0)])
    t = Trajectory([(1, 2)])
    with pytest.raises(ValueError):
        t.waypoints[0, 0] = 5


def test_past_history_requires_consistent_pose():
    w = np.array([[-1.0, 0.0], [0.0, 0.0]])
    h = PastHistory.from_waypoints(w)
    assert h.pose.heading == 0.0
    with pytest.raises(ValueError):
        PastHistory(w, Pose(Point2(1, 0), 0.0))
    with pytest.raises(ValueError):
        PastHistory(w[:1], Pose.identity())


def test_heading_of_stopped_agent_is_zero():
    assert heading_pose(np.array([[2.0, 3.0], [2.0, 3.0]])).heading == 0.0
    assert heading_pose(np.array([[0.0, 0.0], [0.0, 1.0]])).heading == pytest.approx(math.pi / 2)


def test_compose_matches_sequential_application():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(5, 2))
    outer = Pose(Point2(1.0, -2.0), 0.7)
    inner = Pose(Point2(-0.5, 3.0), -1.9)
    direct = points_from_frame(points_from_frame(pts, inner), outer)
    assert np.allclose(points_from_frame(pts, compose(outer, inner)), direct, atol=1e-12)


def test_distance_zero_under_consistent_rigid_motion():
    rng = np.random.default_rng(0)
    u = Trajectory(rng.normal(size=(6, 2)))
    pose = Pose(Point2(0.3, -0.2), 0.4)
    motion = Pose(Point2(10.0, -4.0), 2.1)
    moved = Trajectory(points_from_frame(u.waypoints, motion))
    moved_pose = compose(motion, pose)
    assert trajectory_distance(u, pose, moved, moved_pose) == pytest.approx(0.0, abs=1e-20 + 1e-12)


def test_distance_of_unit_offset_over_two_steps():
    u = Trajectory([(0, 0), (1, 0)])
    v = Trajectory([(1, 0), (2, 0)])
    assert trajectory_distance(u, Pose.identity(), v, Pose.identity()) == 2.0


@settings(max_examples=50)
@given(st.integers(1, 10), st.integers(0, 10_000))
def test_distance_matches_explicit_rotation_matrices(T, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(T, 2)) * 5, rng.normal(size=(T, 2)) * 5
    pu, pv = rng.normal(size=2), rng.normal(size=2)
    hu, hv = rng.uniform(-math.pi, math.pi, size=2)
    cu = (u - pu) @ _rot(hu)          # row-vector form of R(-h) (x - p)
    cv = (v - pv) @ _rot(hv)
    expect = float(np.sum((cu - cv) ** 2))
    got = trajectory_distance(Trajectory(u), Pose(Point2(*pu), hu), Trajectory(v), Pose(Point2(*pv), hv))
    assert got == pytest.approx(expect, rel=1e-12, abs=1e-12)
    back = trajectory_distance(Trajectory(v), Pose(Point2(*pv), hv), Trajectory(u), Pose(Point2(*pu), hu))
    assert got == pytest.approx(back, rel=1e-12, abs=1e-12)


def test_distance_rejects_length_mismatch():
    with pytest.raises(IncomparableTrajectories):
        trajectory_distance(Trajectory([(0, 0)]), Pose.identity(), Trajectory([(0, 0), (1, 1)]), Pose.identity())


def test_points_to_frame_broadcasts():
    pts = np.zeros((3, 4, 2))
    assert points_to_frame(pts, Pose(Point2(1, 1), 0.3)).shape == (3, 4, 2)
