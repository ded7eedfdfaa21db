"""Displacement and likelihood metrics, endpoint categories and aggregated reports."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geom import IncomparableTrajectories, Pose, Trajectory, points_to_frame

WeightedSet = Sequence[tuple[float, Trajectory]]


def per_step_errors(pred: Trajectory, gt: Trajectory) -> np.ndarray:
    if len(pred) != len(gt):
        raise IncomparableTrajectories(f"length mismatch: {len(pred)} vs {len(gt)}")
    return np.linalg.norm(pred.waypoints - gt.waypoints, axis=1)


def ade(pred: Trajectory, gt: Trajectory) -> float:
    return float(per_step_errors(pred, gt).mean())


def fde(pred: Trajectory, gt: Trajectory) -> float:
    return float(per_step_errors(pred, gt)[-1])


def msd(pred: Trajectory, gt: Trajectory) -> float:
    return float(np.mean(per_step_errors(pred, gt) ** 2))


def ranked(preds: WeightedSet) -> list[tuple[float, Trajectory]]:
    """Sort by weight, descending; equal weights keep their original order."""
    order = np.argsort(-np.array([w for w, _ in preds], dtype=np.float64), kind="stable")
    return [preds[i] for i in order]


def _top(preds: WeightedSet, M: int) -> list[tuple[float, Trajectory]]:
    if M < 1 or M > len(preds):
        raise ValueError(f"M={M} must be in [1, {len(preds)}]")
    return ranked(preds)[:M]


def min_ade(preds: WeightedSet, gt: Trajectory, M: int) -> float:
    return min(ade(p, gt) for _, p in _top(preds, M))


def min_msd(preds: WeightedSet, gt: Trajectory, M: int) -> float:
    return min(msd(p, gt) for _, p in _top(preds, M))


class EndpointCategory(enum.Enum):
    STATIONARY = "Stationary"
    SLOW = "Slow"
    STRAIGHT = "Straight"
    SLEFT = "SLeft"
    LEFT = "Left"
    SRIGHT = "SRight"
    RIGHT = "Right"


def endpoint_category(gt: Trajectory, gt_pose: Pose, stationary_m: float = 4.0, slow_m: float = 8.0,
                      straight_deg: float = 5.0, slight_deg: float = 30.0) -> EndpointCategory:
    """Bin by the final waypoint in the agent frame; counterclockwise (positive) bearing is left.

    Boundaries belong to the inner bin: exactly 5 degrees is Straight, exactly 30 is SLeft.
    """
    end = points_to_frame(gt.waypoints[-1], gt_pose)
    dist = math.hypot(end[0], end[1])
    if dist < stationary_m:
        return EndpointCategory.STATIONARY
    if dist < slow_m:
        return EndpointCategory.SLOW
    bearing = math.atan2(end[1], end[0])
    mag = abs(bearing)
    if mag <= math.radians(straight_deg):
        return EndpointCategory.STRAIGHT
    if mag <= math.radians(slight_deg):
        return EndpointCategory.SLEFT if bearing > 0 else EndpointCategory.SRIGHT
    return EndpointCategory.LEFT if bearing > 0 else EndpointCategory.RIGHT


@dataclass
class MethodOutput:
    """A method's prediction for one example: a weighted trajectory set, optionally metric LL."""

    trajectories: list
    metric_ll: float | None = None

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("a method must output at least one trajectory")
        self.trajectories = ranked(self.trajectories)


@dataclass
class Stat:
    mean: float
    std: float


@dataclass
class MetricsReport:
    count: int
    set_size: int
    stats: dict                                   # metric name -> Stat, or None when absent
    m_values: tuple = ()
    per_step: dict = field(default_factory=dict)  # metric name -> (T,) mean error per step
    categories: dict = field(default_factory=dict)  # EndpointCategory -> MetricsReport

    def mean(self, name: str) -> float | None:
        s = self.stats.get(name)
        return None if s is None else s.mean


def metric_names(m_values) -> list[str]:
    names = ["ll", "ade", "fde"]
    for m in m_values:
        names += [f"min_ade_{m}", f"min_msd_{m}"]
    return names


def _stat(values) -> Stat:
    v = np.asarray(values, dtype=np.float64)
    return Stat(float(v.mean()), float(v.std()))


def _example_rows(out: MethodOutput, gt: Trajectory, m_values):
    """Per-example metric values plus per-step error vectors.

    minADE_M with M beyond the set size is taken over the whole set (bracketed cell).
    """
    top = out.trajectories[0][1]
    steps = per_step_errors(top, gt)
    row = {"ll": out.metric_ll, "ade": float(steps.mean()), "fde": float(steps[-1])}
    step_rows = {"ade": steps}
    for m in m_values:
        cands = out.trajectories[:min(m, len(out.trajectories))]
        errs = [per_step_errors(p, gt) for _, p in cands]
        ades = [e.mean() for e in errs]
        best = int(np.argmin(ades))
        row[f"min_ade_{m}"] = float(ades[best])
        row[f"min_msd_{m}"] = float(min(np.mean(e ** 2) for e in errs))
        step_rows[f"min_ade_{m}"] = errs[best]
    return row, step_rows


def _aggregate(rows, step_rows, m_values, set_size) -> MetricsReport:
    stats = {}
    for name in metric_names(m_values):
        vals = [r[name] for r in rows]
        stats[name] = None if any(v is None for v in vals) else _stat(vals)
    per_step = {k: np.mean([s[k] for s in step_rows], axis=0) for k in step_rows[0]}
    return MetricsReport(len(rows), set_size, stats, tuple(m_values), per_step)


def report(outputs: Sequence[MethodOutput], dataset: Sequence[tuple[Trajectory, Pose]],
           m_values=(5, 10, 15)) -> MetricsReport:
    """Aggregate metrics over aligned (output, (groundtruth, pose)) pairs.

    Means are arithmetic, standard deviations are population deviations across
    examples. LL is reported only when every output carries it.
    """
    if len(outputs) != len(dataset):
        raise ValueError(f"{len(outputs)} outputs for {len(dataset)} examples")
    if not outputs:
        raise ValueError("nothing to report")
    set_size = min(len(o.trajectories) for o in outputs)
    rows, step_rows, cats = [], [], {}
    for out, (gt, pose) in zip(outputs, dataset):
        r, s = _example_rows(out, gt, m_values)
        rows.append(r)
        step_rows.append(s)
        cats.setdefault(endpoint_category(gt, pose), []).append(len(rows) - 1)
    rep = _aggregate(rows, step_rows, m_values, set_size)
    for cat in EndpointCategory:
        if cat in cats:
            idx = cats[cat]
            rep.categories[cat] = _aggregate([rows[i] for i in idx], [step_rows[i] for i in idx],
                                             m_values, set_size)
    return rep
