"""Planar trajectories, agent-centric frames and the invariant trajectory distance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Point2(NamedTuple):
    x: float
    y: float


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(float(angle), 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose:
    position: Point2
    heading: float = 0.0

    def __post_init__(self):
        px, py = float(self.position[0]), float(self.position[1])
        if not (math.isfinite(px) and math.isfinite(py) and math.isfinite(self.heading)):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "position", Point2(px, py))
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Point2(0.0, 0.0), 0.0)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """T planar waypoints sampled every ``dt`` seconds, stored as a (T, 2) array."""

    waypoints: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != 2 or w.shape[0] < 1:
            raise ValueError(f"waypoints must have shape (T, 2) with T >= 1, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("waypoints must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    def __len__(self) -> int:
        return self.waypoints.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.dt == other.dt and np.array_equal(self.waypoints, other.waypoints)

    def points(self) -> list[Point2]:
        return [Point2(float(x), float(y)) for x, y in self.waypoints]


@dataclass(frozen=True, eq=False)
class PastHistory:
    """H >= 2 observed waypoints (times -H+1..0); ``pose`` is the frame at t = 0."""

    waypoints: np.ndarray
    pose: Pose

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != 2 or w.shape[0] < 2:
            raise ValueError("history needs at least two (x, y) waypoints")
        if not np.all(np.isfinite(w)):
            raise ValueError("history must be finite")
        if not np.allclose(w[-1], self.pose.position, rtol=0.0, atol=1e-9):
            raise ValueError("last history waypoint must coincide with the pose position")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    @classmethod
    def from_waypoints(cls, waypoints) -> "PastHistory":
        w = np.asarray(waypoints, dtype=np.float64)
        return cls(w, heading_pose(w))


def heading_pose(waypoints) -> Pose:
    """Pose at the last waypoint, heading along the last displacement (0 if it vanishes)."""
    w = np.asarray(waypoints, dtype=np.float64)
    d = w[-1] - w[-2]
    heading = 0.0 if d[0] == 0.0 and d[1] == 0.0 else math.atan2(d[1], d[0])
    return Pose(Point2(w[-1, 0], w[-1, 1]), heading)


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def points_to_frame(points: np.ndarray, pose: Pose) -> np.ndarray:
    """R(-heading) (p - position) for an (..., 2) array."""
    p = np.asarray(points, dtype=np.float64)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dx = p[..., 0] - pose.position.x
    dy = p[..., 1] - pose.position.y
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def points_from_frame(points: np.ndarray, pose: Pose) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    x = c * p[..., 0] - s * p[..., 1] + pose.position.x
    y = s * p[..., 0] + c * p[..., 1] + pose.position.y
    return np.stack([x, y], axis=-1)


def to_agent_frame(traj: Trajectory, pose: Pose) -> Trajectory:
    return Trajectory(points_to_frame(traj.waypoints, pose), traj.dt)


def from_agent_frame(traj: Trajectory, pose: Pose) -> Trajectory:
    return Trajectory(points_from_frame(traj.waypoints, pose), traj.dt)


def compose(outer: Pose, inner: Pose) -> Pose:
    """Pose ``inner`` (expressed in ``outer``'s frame) as a world pose."""
    p = points_from_frame(np.array(inner.position), outer)
    return Pose(Point2(p[0], p[1]), outer.heading + inner.heading)


class IncomparableTrajectories(ValueError):
    pass


def trajectory_distance(u: Trajectory, u_pose: Pose, v: Trajectory, v_pose: Pose) -> float:
    """Sum over steps of squared distances between the canonical-frame waypoints."""
    if len(u) != len(v):
        raise IncomparableTrajectories(f"length mismatch: {len(u)} vs {len(v)}")
    d = points_to_frame(u.waypoints, u_pose) - points_to_frame(v.waypoints, v_pose)
    return float(np.sum(d * d))
