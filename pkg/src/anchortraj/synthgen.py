"""Synthetic 3-way intersection and its Bayes-optimal per-step likelihood oracle.

An agent approaches the intersection along +x in a straight line, then picks a
branch (left / middle / right) from a fixed prior. In the branch frame the future is

    longitudinal(t) = speed * t * dt
    lateral(t)      = amplitude * (sin(omega * t * dt + phi) - sin(phi))

with omega ~ U(omega_range), phi ~ U(phi_range), plus isotropic Gaussian
observation noise of std ``noise_std`` on every future waypoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geom import PastHistory, Point2, Pose, Trajectory, heading_pose, points_from_frame, points_to_frame

BRANCHES = ("left", "middle", "right")


@dataclass(frozen=True)
class ToyConfig:
    branch_probs: tuple = (0.3, 0.5, 0.2)
    branch_headings: tuple = (math.pi / 4, 0.0, -math.pi / 4)
    speed: float = 1.0              # m/s
    T: int = 12
    H: int = 5
    dt: float = 0.4
    amplitude: float = 0.5
    omega_range: tuple = (0.0, 2.0)
    phi_range: tuple = (-math.pi, math.pi)
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        probs = tuple(float(p) for p in self.branch_probs)
        object.__setattr__(self, "branch_probs", probs)
        object.__setattr__(self, "branch_headings", tuple(float(h) for h in self.branch_headings))
        object.__setattr__(self, "omega_range", tuple(float(v) for v in self.omega_range))
        object.__setattr__(self, "phi_range", tuple(float(v) for v in self.phi_range))
        if len(probs) != 3 or len(self.branch_headings) != 3:
            raise ValueError("need exactly three branches")
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("branch_probs must be non-negative and sum to 1")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        if self.T < 1 or self.H < 2 or not self.dt > 0:
            raise ValueError("need T >= 1, H >= 2 and dt > 0")
        if self.amplitude < 0 or self.noise_std < 0:
            raise ValueError("amplitude and noise_std must be non-negative")

    def taus(self) -> np.ndarray:
        return np.arange(1, self.T + 1) * self.dt


@dataclass(frozen=True, eq=False)
class ToyScene:
    history: PastHistory
    future: Trajectory
    branch: str
    index: int = 0
    omega: float = float("nan")
    phi: float = float("nan")

    @property
    def branch_index(self) -> int:
        return BRANCHES.index(self.branch)

    @property
    def pose(self) -> Pose:
        return self.history.pose


def lateral_offset(cfg: ToyConfig, omega, phi) -> np.ndarray:
    """Noiseless lateral offsets, broadcasting omega/phi against the T steps (last axis)."""
    tau = cfg.taus()
    omega = np.asarray(omega, dtype=np.float64)[..., None]
    phi = np.asarray(phi, dtype=np.float64)[..., None]
    return cfg.amplitude * (np.sin(omega * tau + phi) - np.sin(phi))


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def approach_history(cfg: ToyConfig) -> PastHistory:
    t = np.arange(-cfg.H + 1, 1, dtype=np.float64)
    w = np.stack([cfg.speed * t * cfg.dt, np.zeros_like(t)], axis=1)
    return PastHistory(w, heading_pose(w))


def sample_scene(cfg: ToyConfig, rng: np.random.Generator, index: int = 0,
                 history: PastHistory | None = None) -> ToyScene:
    b = min(int(np.searchsorted(np.cumsum(cfg.branch_probs), rng.random(), side="right")), 2)
    omega = float(rng.uniform(*cfg.omega_range))
    phi = float(rng.uniform(*cfg.phi_range))
    lon = cfg.speed * cfg.taus()
    lat = lateral_offset(cfg, omega, phi)
    local = np.stack([lon, lat], axis=1)
    branch_pose = Pose(Point2(0.0, 0.0), cfg.branch_headings[b])
    future = points_from_frame(local, branch_pose)
    if cfg.noise_std > 0:
        future = future + rng.normal(0.0, cfg.noise_std, size=future.shape)
    history = approach_history(cfg) if history is None else history
    return ToyScene(history, Trajectory(future, cfg.dt), BRANCHES[b], index, omega, phi)


def generate_dataset(cfg: ToyConfig, n: int) -> list[ToyScene]:
    """n scenes, scene i drawn from its own stream derived from (cfg.seed, i)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    history = approach_history(cfg)
    return [sample_scene(cfg, scene_rng(cfg.seed, i), i, history) for i in range(n)]


def transform_scene(scene: ToyScene, motion: Pose) -> ToyScene:
    """Apply a global rigid motion (rotate by heading, then translate) to a scene."""
    hist = points_from_frame(scene.history.waypoints, motion)
    fut = points_from_frame(scene.future.waypoints, motion)
    return ToyScene(PastHistory(hist, heading_pose(hist)), Trajectory(fut, scene.future.dt),
                    scene.branch, scene.index, scene.omega, scene.phi)


# ---------------------------------------------------------------- oracle

@dataclass(frozen=True)
class OracleEstimate:
    mean: float
    stderr: float
    per_scene: np.ndarray | None = None
    degenerate: bool = False


class LateralDensity:
    """Monte-Carlo estimate of the per-step marginal density of the lateral offset.

    p_t(y) = E_{omega, phi}[N(y | lateral_t(omega, phi), noise_std^2)], tabulated in log
    space on a grid of spacing noise_std / 40 and linearly interpolated. Queries off
    the grid lie at least 10 sigma beyond every sample; they are evaluated directly
    from the samples within 5 sigma of the nearest extreme (the rest carry relative
    weight below exp(-50)).
    """

    def __init__(self, cfg: ToyConfig, mc_samples: int, seed: int = 0, resolution: int = 40):
        if mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if not cfg.noise_std > 0:
            raise ValueError("lateral density is singular without observation noise")
        rng = np.random.default_rng(seed)
        omega = rng.uniform(*cfg.omega_range, size=mc_samples)
        phi = rng.uniform(*cfg.phi_range, size=mc_samples)
        self.sigma = cfg.noise_std
        self.samples = np.sort(lateral_offset(cfg, omega, phi).T, axis=1)   # (T, M)
        half = 2.0 * cfg.amplitude + 10.0 * self.sigma
        step = self.sigma / resolution
        n = int(math.ceil(2 * half / step)) + 1
        self.grid = np.linspace(-half, half, n)
        self.table = np.stack([self._direct(t, self.grid) for t in range(len(self.samples))])

    def _direct(self, t: int, y: np.ndarray, s: np.ndarray | None = None, chunk: int = 256) -> np.ndarray:
        n = self.samples.shape[1]
        s = self.samples[t] if s is None else s
        out = np.empty(len(y))
        norm = -math.log(n) - 0.5 * math.log(2 * math.pi) - math.log(self.sigma)
        for i in range(0, len(y), chunk):
            z = (y[i:i + chunk, None] - s[None, :]) / self.sigma
            out[i:i + chunk] = logsumexp(-0.5 * z * z, axis=1) + norm
        return out

    def log_density(self, lat: np.ndarray) -> np.ndarray:
        """lat has shape (..., T); returns per-step log densities of the same shape."""
        lat = np.asarray(lat, dtype=np.float64)
        flat = lat.reshape(-1, lat.shape[-1])
        out = np.empty_like(flat)
        for t in range(flat.shape[1]):
            y = flat[:, t]
            out[:, t] = np.interp(y, self.grid, self.table[t])
            s = self.samples[t]
            lo, hi = y < self.grid[0], y > self.grid[-1]
            if np.any(lo):
                out[lo, t] = self._direct(t, y[lo], s[s <= s[0] + 5 * self.sigma])
            if np.any(hi):
                out[hi, t] = self._direct(t, y[hi], s[s >= s[-1] - 5 * self.sigma])
        return out.reshape(lat.shape)


def oracle_log_likelihood(cfg: ToyConfig, scenes, density: LateralDensity) -> np.ndarray:
    """Per-scene log sum_b pi_b prod_t p_t(s_t | b) under the true generative process."""
    local = np.stack([points_to_frame(s.future.waypoints, s.pose) for s in scenes])    # (N, T, 2)
    lon_mean = cfg.speed * cfg.taus()
    sigma = cfg.noise_std
    terms = []
    with np.errstate(divide="ignore"):
        log_prior = np.log(np.asarray(cfg.branch_probs))
    for b, heading in enumerate(cfg.branch_headings):
        branch_local = points_to_frame(local, Pose(Point2(0.0, 0.0), heading))
        z = (branch_local[..., 0] - lon_mean) / sigma
        lon_lp = -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(sigma)
        lat_lp = density.log_density(branch_local[..., 1])
        terms.append(log_prior[b] + (lon_lp + lat_lp).sum(axis=1))
    return logsumexp(np.stack(terms, axis=1), axis=1)


def oracle_metric_ll(cfg: ToyConfig, scenes, mc_samples: int = 10_000, seed: int = 0) -> OracleEstimate:
    """Mean per-dimension log-likelihood of the scenes' futures under the true process.

    Without observation noise the futures lie on a low-dimensional manifold and the
    density is a delta; that case is flagged ``degenerate`` with mean = +inf.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    if cfg.noise_std == 0:
        return OracleEstimate(math.inf, 0.0, None, True)
    scenes = list(scenes)
    if not scenes:
        raise ValueError("no scenes")
    density = LateralDensity(cfg, mc_samples, seed)
    per_scene = oracle_log_likelihood(cfg, scenes, density) / (2 * cfg.T)
    stderr = float(per_scene.std(ddof=1) / math.sqrt(len(per_scene))) if len(per_scene) > 1 else 0.0
    return OracleEstimate(float(per_scene.mean()), stderr, per_scene)
