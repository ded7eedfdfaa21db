"""Anchor sets: k-means under the invariant distance, enumeration, assignment and
stratified subsampling of skewed datasets."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geom import IncomparableTrajectories, Pose, Trajectory, points_to_frame


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """K canonical-frame anchors stored as a (K, T, 2) array."""

    anchors: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        a = np.array(self.anchors, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"anchors must have shape (K, T, 2), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("anchors must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "anchors", a)

    @property
    def K(self) -> int:
        return self.anchors.shape[0]

    @property
    def T(self) -> int:
        return self.anchors.shape[1]

    def __len__(self) -> int:
        return self.K

    def __getitem__(self, k: int) -> Trajectory:
        return Trajectory(self.anchors[k], self.dt)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AnchorSet):
            return NotImplemented
        return self.dt == other.dt and np.array_equal(self.anchors, other.anchors)

    def digest(self) -> str:
        """Content hash used to pair checkpoints with the anchors they were trained on."""
        h = hashlib.sha256()
        h.update(repr((self.K, self.T, float(self.dt))).encode())
        h.update(np.ascontiguousarray(self.anchors, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class AssignmentResult:
    index: int
    distance: float


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    history: list = field(default_factory=list)  # distortion after each assignment step

    @property
    def distortion(self) -> float:
        return self.history[-1]


def canonicalize(trajectories: Sequence[tuple[Trajectory, Pose]]) -> np.ndarray:
    if len(trajectories) == 0:
        raise ValueError("no trajectories")
    T = len(trajectories[0][0])
    out = np.empty((len(trajectories), T, 2))
    for i, (traj, pose) in enumerate(trajectories):
        if len(traj) != T:
            raise IncomparableTrajectories("all trajectories must share the same length")
        out[i] = points_to_frame(traj.waypoints, pose)
    return out


def squared_distances(X: np.ndarray, C: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Exact (N, K) sums of squared waypoint differences; X is (N, T, 2), C is (K, T, 2)."""
    X = X.reshape(len(X), -1)
    C = C.reshape(len(C), -1)
    out = np.empty((len(X), len(C)))
    for s in range(0, len(X), chunk):
        diff = X[s:s + chunk, None, :] - C[None, :, :]
        out[s:s + chunk] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def _kmeanspp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    idx = [int(rng.integers(n))]
    closest = squared_distances(X, X[idx])[:, 0]
    for _ in range(1, K):
        total = closest.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen centre
            candidates = np.setdiff1d(np.arange(n), idx)
            nxt = int(candidates[0])
        else:
            nxt = int(rng.choice(n, p=closest / total))
        idx.append(nxt)
        closest = np.minimum(closest, squared_distances(X, X[[nxt]])[:, 0])
    return X[idx].copy()


def lloyd(X: np.ndarray, K: int, seed: int = 0, max_iters: int = 100, n_init: int = 10) -> KMeansResult:
    """Lloyd's algorithm on canonical trajectories X of shape (N, T, 2).

    Runs ``n_init`` k-means++ restarts from one seeded stream and keeps the run with
    the lowest final distortion (earliest run on ties). ``history`` is that run's.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n == 0:
        raise ValueError("k-means needs at least one trajectory")
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must be in [1, {n}]")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd_run(X, K, rng, max_iters)
        if best is None or run.distortion < best.distortion:
            best = run
    return best


def _lloyd_run(X: np.ndarray, K: int, rng: np.random.Generator, max_iters: int) -> KMeansResult:
    n = len(X)
    C = _kmeanspp(X, K, rng)
    labels = None
    history = []
    for _ in range(max_iters):
        d = squared_distances(X, C)
        new = np.argmin(d, axis=1)
        history.append(float(d[np.arange(n), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = _update_centroids(X, labels, K)
    C, labels = _hartigan(X, C, labels, K, history)
    return KMeansResult(C, labels, history)


def _hartigan(X: np.ndarray, C: np.ndarray, labels: np.ndarray, K: int, history: list):
    """Single-point transfers that lower the distortion, until none does.

    Moving x from cluster a (size n_a) to b changes the distortion by
    n_b/(n_b+1) |x - c_b|^2 - n_a/(n_a-1) |x - c_a|^2. Every fixpoint of this step is
    also a Lloyd fixpoint, and it escapes many Lloyd local minima. The exact
    distortion after each pass is appended to ``history``.
    """
    n = len(X)
    Xf = X.reshape(n, -1)
    labels = labels.copy()
    C = _update_centroids(X, labels, K).reshape(K, -1)
    counts = np.bincount(labels, minlength=K).astype(np.float64)
    rows = np.arange(n)
    while True:
        d = squared_distances(Xf, C)
        tol = 1e-12 * max(float(d[rows, labels].sum()), 1e-300)
        gains = _transfer_gains(d, labels, counts)
        cand = np.flatnonzero(gains.max(axis=1) > tol)
        if len(cand) == 0:
            break
        moved = False
        for i in cand[np.argsort(-gains[cand].max(axis=1), kind="stable")]:
            a = labels[i]
            if counts[a] <= 1:
                continue
            di = np.einsum("kd,kd->k", Xf[i] - C, Xf[i] - C)
            add = counts / (counts + 1.0) * di
            add[a] = np.inf
            b = int(np.argmin(add))
            if counts[a] / (counts[a] - 1.0) * di[a] - add[b] <= tol:
                continue
            C[a] = (counts[a] * C[a] - Xf[i]) / (counts[a] - 1.0)
            C[b] = (counts[b] * C[b] + Xf[i]) / (counts[b] + 1.0)
            counts[a] -= 1.0
            counts[b] += 1.0
            labels[i] = b
            moved = True
        C = _update_centroids(X, labels, K).reshape(K, -1)
        if not moved:
            break
        diff = Xf - C[labels]
        history.append(float(np.einsum("nd,nd->", diff, diff)))
    return C.reshape((K,) + X.shape[1:]), labels


def _transfer_gains(d: np.ndarray, labels: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """(N, K) distortion decrease from moving each point to each other cluster."""
    n = len(d)
    rows = np.arange(n)
    own = counts[labels]
    with np.errstate(divide="ignore", invalid="ignore"):
        remove = np.where(own > 1, own / (own - 1.0) * d[rows, labels], -np.inf)
    gains = remove[:, None] - counts[None, :] / (counts[None, :] + 1.0) * d
    gains[rows, labels] = -np.inf
    return gains


def _update_centroids(X: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    C = np.zeros((K,) + X.shape[1:])
    counts = np.bincount(labels, minlength=K)
    for k in range(K):
        if counts[k]:
            C[k] = X[labels == k].mean(axis=0)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        diff = X - C[labels]
        cost = np.einsum("ntd,ntd->n", diff, diff)
        for k in empty:
            far = int(np.argmax(cost))
            C[k] = X[far]
            labels[far] = k
            cost[far] = -1.0
    return C


def kmeans_anchors(trajectories: Sequence[tuple[Trajectory, Pose]], K: int,
                   seed: int = 0, max_iters: int = 100, n_init: int = 10) -> AnchorSet:
    if len(trajectories) == 0:
        raise ValueError("k-means needs at least one trajectory")
    X = canonicalize(trajectories)
    result = lloyd(X, K, seed=seed, max_iters=max_iters, n_init=n_init)
    return AnchorSet(result.centroids, trajectories[0][0].dt)


def enumerate_anchors(n_orientations: int, final_distances: Sequence[float], T: int,
                      dt: float = 1.0, include_stationary: bool = True) -> AnchorSet:
    """Straight constant-speed anchors at evenly spaced headings, distance-major order."""
    if n_orientations < 1:
        raise ValueError("n_orientations must be >= 1")
    if T < 1:
        raise ValueError("T must be >= 1")
    if any(not d > 0 for d in final_distances):
        raise ValueError("final distances must be positive")
    frac = np.arange(1, T + 1) / T
    out = []
    for dist in final_distances:
        for j in range(n_orientations):
            theta = 2.0 * math.pi * j / n_orientations
            direction = np.array([math.cos(theta), math.sin(theta)])
            out.append(dist * frac[:, None] * direction[None, :])
    if include_stationary:
        out.append(np.zeros((T, 2)))
    if not out:
        raise ValueError("enumeration produced no anchors")
    return AnchorSet(np.stack(out), dt)


def anchor_distances(gt: Trajectory, gt_pose: Pose, anchors: AnchorSet) -> np.ndarray:
    if len(gt) != anchors.T:
        raise IncomparableTrajectories(f"length mismatch: {len(gt)} vs {anchors.T}")
    canon = points_to_frame(gt.waypoints, gt_pose)
    return squared_distances(canon[None], anchors.anchors)[0]


def assign_anchor(gt: Trajectory, gt_pose: Pose, anchors: AnchorSet) -> AssignmentResult:
    d = anchor_distances(gt, gt_pose, anchors)
    k = int(np.argmin(d))  # first minimum wins ties
    return AssignmentResult(k, float(d[k]))


def assign_many(canon_futures: np.ndarray, anchors: AnchorSet) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised hard assignment for (N, T, 2) canonical futures."""
    d = squared_distances(canon_futures, anchors.anchors)
    idx = np.argmin(d, axis=1)
    return idx, d[np.arange(len(d)), idx]


def soft_assign(gt: Trajectory, gt_pose: Pose, anchors: AnchorSet, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    return soft_weights(anchor_distances(gt, gt_pose, anchors), temperature)


def soft_weights(distances: np.ndarray, temperature: float) -> np.ndarray:
    z = -np.asarray(distances, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def signed_curvature(waypoints: np.ndarray) -> float:
    """Menger curvature through the first, middle and last waypoint; positive turns left."""
    w = np.asarray(waypoints, dtype=np.float64)
    a, b, c = w[0], w[(len(w) - 1) // 2], w[-1]
    ab, bc, ca = np.linalg.norm(b - a), np.linalg.norm(c - b), np.linalg.norm(a - c)
    denom = ab * bc * ca
    if denom == 0.0:
        return 0.0
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return float(2.0 * cross / denom)


def arc_length(waypoints: np.ndarray) -> float:
    w = np.asarray(waypoints, dtype=np.float64)
    return float(np.linalg.norm(np.diff(w, axis=0), axis=1).sum())


def _bin(values: np.ndarray, n: int) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return np.zeros(len(values), dtype=int)
    return np.clip(((values - lo) / (hi - lo) * n).astype(int), 0, n - 1)


def capped_counts(counts: np.ndarray, cap_fraction: float) -> np.ndarray:
    """Largest per-bin counts with every bin at most ``cap_fraction`` of the retained total.

    Iterates cap -> recount to a fixpoint. The cap never drops below the uniform share
    1/m (m nonempty bins), so a dataset that cannot be capped is left unchanged.
    """
    counts = np.asarray(counts, dtype=int)
    m = int(np.count_nonzero(counts))
    if m == 0:
        return counts.copy()
    frac = max(cap_fraction, 1.0 / m)
    kept = counts.copy()
    while True:
        cap = math.floor(frac * kept.sum() + 1e-9)
        nxt = np.minimum(counts, cap)
        if np.array_equal(nxt, kept):
            return kept
        kept = nxt


def stratified_subsample(examples: Sequence, curvature_bins: int = 11, distance_bins: int = 11,
                         cap_fraction: float = 0.05, seed: int = 0,
                         future: Callable | None = None) -> list:
    """Cap each (curvature, path-length) bin at ``cap_fraction`` of the resulting dataset.

    ``future`` maps an example to its groundtruth future Trajectory; by default the
    example's ``.future`` attribute, or the example itself.
    """
    if not 0 < cap_fraction <= 1:
        raise ValueError("cap_fraction must be in (0, 1]")
    if len(examples) == 0:
        return []
    if future is None:
        future = lambda e: getattr(e, "future", e)  # noqa: E731
    paths = [future(e).waypoints for e in examples]
    curv = np.array([signed_curvature(p) for p in paths])
    dist = np.array([arc_length(p) for p in paths])
    cell = _bin(curv, curvature_bins) * distance_bins + _bin(dist, distance_bins)
    counts = np.bincount(cell, minlength=curvature_bins * distance_bins)
    kept = capped_counts(counts, cap_fraction)
    rng = np.random.default_rng(seed)
    chosen = []
    for b in np.flatnonzero(counts):
        members = np.flatnonzero(cell == b)
        if kept[b] < len(members):
            members = rng.choice(members, size=kept[b], replace=False)
        chosen.append(members)
    order = np.sort(np.concatenate(chosen))
    return [examples[i] for i in order]
