"""Anchor-based multimodal trajectory prediction with per-timestep Gaussian mixtures."""

from .anchors import AnchorSet, assign_anchor, enumerate_anchors, kmeans_anchors
from .geom import PastHistory, Point2, Pose, Trajectory, trajectory_distance
from .metrics import ade, fde, min_ade, min_msd
from .mixture import TrajectoryMixture, log_likelihood, map_trajectory_set, metric_ll, occupancy
from .synthgen import ToyConfig, generate_dataset, oracle_metric_ll

__version__ = "0.1.0"

__all__ = ["AnchorSet", "PastHistory", "Point2", "Pose", "ToyConfig", "Trajectory", "TrajectoryMixture", "ade",
           "assign_anchor", "enumerate_anchors", "fde", "generate_dataset", "kmeans_anchors", "log_likelihood",
           "map_trajectory_set", "metric_ll", "min_ade", "min_msd", "occupancy", "oracle_metric_ll",
           "trajectory_distance"]
