"""Per-timestep Gaussian mixture over anchor-relative futures.

Parameters live in the agent frame; each (anchor, step) carries five raw values
``(mu_x, mu_y, log_sx, log_sy, rho_raw)``. Squashing keeps every covariance
positive definite: sigma = exp(clip(log_s, -5, 5)), rho = 0.99 * tanh(rho_raw).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .anchors import AnchorSet
from .geom import (IncomparableTrajectories, Point2, Pose, Trajectory, points_from_frame,
                   points_to_frame)

LOG_SIGMA_MIN = -5.0
LOG_SIGMA_MAX = 5.0
RHO_MAX = 0.99
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParams2D:
    mu_x: float = 0.0
    mu_y: float = 0.0
    log_sx: float = 0.0
    log_sy: float = 0.0
    rho_raw: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_x, self.mu_y, self.log_sx, self.log_sy, self.rho_raw])


def squash(params: np.ndarray):
    """Raw (..., 5) parameters -> (mu_x, mu_y, sigma_x, sigma_y, rho)."""
    p = np.asarray(params, dtype=np.float64)
    sx = np.exp(np.clip(p[..., 2], LOG_SIGMA_MIN, LOG_SIGMA_MAX))
    sy = np.exp(np.clip(p[..., 3], LOG_SIGMA_MIN, LOG_SIGMA_MAX))
    rho = RHO_MAX * np.tanh(p[..., 4])
    return p[..., 0], p[..., 1], sx, sy, rho


def covariance(g) -> np.ndarray:
    """2x2 covariance of a GaussianParams2D (or a raw (..., 5) array)."""
    p = g.as_array() if isinstance(g, GaussianParams2D) else np.asarray(g, dtype=np.float64)
    _, _, sx, sy, rho = squash(p)
    c = rho * sx * sy
    return np.stack([np.stack([sx * sx, c], -1), np.stack([c, sy * sy], -1)], -2)


def gaussian_log_density(params: np.ndarray, centers: np.ndarray, query: np.ndarray) -> np.ndarray:
    """log N(query | center + mu, Sigma), broadcasting over leading axes."""
    mx, my, sx, sy, rho = squash(params)
    c = np.asarray(centers, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    zx = (q[..., 0] - c[..., 0] - mx) / sx
    zy = (q[..., 1] - c[..., 1] - my) / sy
    one_m = 1.0 - rho * rho
    quad = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / one_m
    return -LOG_2PI - np.log(sx) - np.log(sy) - 0.5 * np.log(one_m) - 0.5 * quad


def step_log_density(g: GaussianParams2D, anchor_pt, query) -> float:
    return float(gaussian_log_density(g.as_array(), np.asarray(anchor_pt), np.asarray(query)))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    return z - logsumexp(z, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class TrajectoryMixture:
    logits: np.ndarray          # (K,)
    params: np.ndarray          # (K, T, 5) raw Gaussian parameters
    anchors: AnchorSet
    frame: Pose = Pose.identity()

    def __post_init__(self):
        logits = np.array(self.logits, dtype=np.float64).reshape(-1)
        params = np.array(self.params, dtype=np.float64)
        K, T = self.anchors.K, self.anchors.T
        if logits.shape != (K,) or params.shape != (K, T, 5):
            raise ValueError(f"expected logits ({K},) and params ({K}, {T}, 5), "
                             f"got {logits.shape} and {params.shape}")
        if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(params))):
            raise ValueError("mixture parameters must be finite")
        logits.setflags(write=False)
        params.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "params", params)

    @property
    def K(self) -> int:
        return self.anchors.K

    @property
    def T(self) -> int:
        return self.anchors.T

    @property
    def weights(self) -> np.ndarray:
        return np.exp(log_softmax(self.logits))

    def gaussian(self, k: int, t: int) -> GaussianParams2D:
        return GaussianParams2D(*map(float, self.params[k, t]))

    def means(self) -> np.ndarray:
        """Agent-frame modes a^k_t + mu^k_t, shape (K, T, 2)."""
        return self.anchors.anchors + self.params[..., :2]

    def covariances(self) -> np.ndarray:
        return covariance(self.params)

    def component_log_likelihoods(self, local_gt: np.ndarray) -> np.ndarray:
        """Per-anchor sum over steps of log N, for an agent-frame (T, 2) future."""
        lp = gaussian_log_density(self.params, self.anchors.anchors, local_gt[None])
        return lp.sum(axis=1)

    def relocated(self, frame: Pose) -> "TrajectoryMixture":
        return TrajectoryMixture(self.logits, self.params, self.anchors, frame)


def _local(mix: TrajectoryMixture, gt: Trajectory, gt_pose: Pose | None) -> np.ndarray:
    if len(gt) != mix.T:
        raise IncomparableTrajectories(f"groundtruth has {len(gt)} steps, mixture has {mix.T}")
    return points_to_frame(gt.waypoints, mix.frame if gt_pose is None else gt_pose)


def log_likelihood(mix: TrajectoryMixture, gt: Trajectory, gt_pose: Pose | None = None) -> float:
    """log sum_k pi_k prod_t N(s_t | a^k_t + mu^k_t, Sigma^k_t) of a world-frame future.

    ``gt_pose`` is the agent frame the groundtruth is expressed relative to; it
    defaults to the mixture's own frame.
    """
    comp = mix.component_log_likelihoods(_local(mix, gt, gt_pose))
    return float(logsumexp(log_softmax(mix.logits) + comp))


def metric_ll(mix: TrajectoryMixture, gt: Trajectory, gt_pose: Pose | None = None) -> float:
    """Log-likelihood per scalar dimension, i.e. divided by 2T."""
    return log_likelihood(mix, gt, gt_pose) / (2 * mix.T)


def top_indices(weights: np.ndarray, top_k: int) -> np.ndarray:
    """Indices of the ``top_k`` largest weights, ties resolved toward lower index."""
    return np.argsort(-np.asarray(weights), kind="stable")[:top_k]


def map_trajectory_set(mix: TrajectoryMixture, top_k: int | None = None) -> list[tuple[float, Trajectory]]:
    """World-frame MAP trajectory of each of the ``top_k`` most probable anchors."""
    top_k = mix.K if top_k is None else top_k
    if not 1 <= top_k <= mix.K:
        raise ValueError(f"top_k={top_k} out of range [1, {mix.K}]")
    w = mix.weights
    means = points_from_frame(mix.means(), mix.frame)
    return [(float(w[k]), Trajectory(means[k], mix.anchors.dt)) for k in top_indices(w, top_k)]


@dataclass(frozen=True)
class GridSpec:
    origin: Point2          # lower-left corner, world frame
    cell_size: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValueError("cell_size must be positive and finite")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have at least one cell")
        if not all(math.isfinite(v) for v in self.origin):
            raise ValueError("grid origin must be finite")
        object.__setattr__(self, "origin", Point2(float(self.origin[0]), float(self.origin[1])))

    def centers(self) -> np.ndarray:
        """(height, width, 2) world coordinates of cell centres; row index is y."""
        xs = self.origin.x + (np.arange(self.width) + 0.5) * self.cell_size
        ys = self.origin.y + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    spec: GridSpec
    density: np.ndarray     # (T, height, width), 1/m^2 at cell centres

    @property
    def cell_area(self) -> float:
        return self.spec.cell_size ** 2

    def mass(self) -> np.ndarray:
        """Midpoint-rule probability mass per timestep."""
        return self.density.sum(axis=(1, 2)) * self.cell_area


def padded_grid_spec(mix: TrajectoryMixture, pad_sigmas: float = 6.0,
                     cell_size: float | None = None) -> GridSpec:
    """World-aligned grid covering every component mean +/- pad_sigmas * sigma."""
    _, _, sx, sy, _ = squash(mix.params)
    radius = pad_sigmas * np.maximum(sx, sy)
    centers = points_from_frame(mix.means(), mix.frame)
    lo = (centers - radius[..., None]).reshape(-1, 2).min(axis=0)
    hi = (centers + radius[..., None]).reshape(-1, 2).max(axis=0)
    if cell_size is None:
        cell_size = float(np.minimum(sx, sy).min()) / 3.0
    width = int(math.ceil((hi[0] - lo[0]) / cell_size))
    height = int(math.ceil((hi[1] - lo[1]) / cell_size))
    return GridSpec(Point2(lo[0], lo[1]), cell_size, max(width, 1), max(height, 1))


def occupancy(mix: TrajectoryMixture, spec: GridSpec) -> OccupancyGrid:
    """Marginal mixture density sum_k pi_k N(c | a^k_t + mu^k_t, Sigma^k_t) at cell centres."""
    local = points_to_frame(spec.centers(), mix.frame)          # (H, W, 2)
    logw = log_softmax(mix.logits)
    out = np.empty((mix.T, spec.height, spec.width))
    for t in range(mix.T):
        lp = gaussian_log_density(mix.params[:, t, None, None, :],
                                  mix.anchors.anchors[:, t, None, None, :],
                                  local[None])                  # (K, H, W)
        out[t] = np.exp(logsumexp(logw[:, None, None] + lp, axis=0))
    return OccupancyGrid(spec, out)
