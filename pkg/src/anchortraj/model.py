"""Small tanh MLP predictor with analytic gradients, the anchor losses, training and
the constant-velocity linear baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorSet
from .geom import PastHistory, Pose, Trajectory, points_to_frame
from .mixture import (LOG_2PI, LOG_SIGMA_MAX, LOG_SIGMA_MIN, RHO_MAX, TrajectoryMixture,
                      log_softmax)

LOSSES = ("multipath-hard", "multipath-soft", "min_of_k", "regression")


class NonFiniteLoss(FloatingPointError):
    def __init__(self, example_id, message="non-finite loss"):
        super().__init__(f"{message} (example {example_id})")
        self.example_id = example_id


class TrainingDiverged(FloatingPointError):
    def __init__(self, step, message="training diverged"):
        super().__init__(f"{message} at step {step}")
        self.step = step


# ---------------------------------------------------------------- parameters

@dataclass
class PredictorParams:
    """Flat parameter vector of an MLP; ``widths`` = (inputs, hidden..., outputs)."""

    flat: np.ndarray
    widths: tuple
    K: int
    T: int
    with_sigma: bool = True

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64)
        self.widths = tuple(int(w) for w in self.widths)
        if self.widths[-1] != head_width(self.K, self.T, self.with_sigma):
            raise ValueError("output width does not match the head configuration")
        if self.flat.shape != (n_params(self.widths),):
            raise ValueError(f"expected {n_params(self.widths)} parameters, got {self.flat.shape}")

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    def layers(self, flat: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into ``flat`` (default: own vector); W has shape (fan_in, fan_out)."""
        flat = self.flat if flat is None else flat
        out, pos = [], 0
        for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
            W = flat[pos:pos + n_in * n_out].reshape(n_in, n_out)
            pos += n_in * n_out
            b = flat[pos:pos + n_out]
            pos += n_out
            out.append((W, b))
        return out

    def copy(self) -> "PredictorParams":
        return PredictorParams(self.flat.copy(), self.widths, self.K, self.T, self.with_sigma)


def head_width(K: int, T: int, with_sigma: bool = True) -> int:
    return K + K * T * (5 if with_sigma else 2)


def n_params(widths) -> int:
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def init_params(n_inputs: int, K: int, T: int, with_sigma: bool = True,
                hidden=(64, 64), seed: int = 0) -> PredictorParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    widths = (n_inputs, *hidden, head_width(K, T, with_sigma))
    rng = np.random.default_rng(seed)
    chunks = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / math.sqrt(n_in)
        chunks.append(rng.uniform(-bound, bound, size=n_in * n_out + n_out))
    return PredictorParams(np.concatenate(chunks), widths, K, T, with_sigma)


def zero_params(n_inputs: int, K: int, T: int, with_sigma: bool = True, hidden=(64, 64)) -> PredictorParams:
    widths = (n_inputs, *hidden, head_width(K, T, with_sigma))
    return PredictorParams(np.zeros(n_params(widths)), widths, K, T, with_sigma)


# ---------------------------------------------------------------- features / forward

def history_features(history: PastHistory, dt: float) -> np.ndarray:
    """Agent-frame past positions (H x 2) followed by their velocities ((H-1) x 2) / dt."""
    local = points_to_frame(history.waypoints, history.pose)
    vel = np.diff(local, axis=0) / dt
    return np.concatenate([local.reshape(-1), vel.reshape(-1)])


def n_features(H: int) -> int:
    return 2 * H + 2 * (H - 1)


def _mlp(params: PredictorParams, X: np.ndarray, flat=None):
    acts = [X]
    layers = params.layers(flat)
    h = X
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        h = z if i == len(layers) - 1 else np.tanh(z)
        acts.append(h)
    return h, acts


def split_head(out: np.ndarray, K: int, T: int, with_sigma: bool):
    """Network outputs (B, D) -> logits (B, K), raw Gaussian parameters (B, K, T, 5)."""
    B = out.shape[0]
    logits = out[:, :K]
    if with_sigma:
        raw = out[:, K:].reshape(B, K, T, 5)
    else:
        raw = np.zeros((B, K, T, 5))
        raw[..., :2] = out[:, K:].reshape(B, K, T, 2)
    return logits, raw


def forward_batch(params: PredictorParams, X: np.ndarray, flat=None):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.n_inputs:
        raise ValueError(f"expected {params.n_inputs} features, got {X.shape[1]}")
    out, _ = _mlp(params, X, flat)
    return split_head(out, params.K, params.T, params.with_sigma)


def forward(params: PredictorParams, context_features, anchors: AnchorSet,
            frame: Pose = Pose.identity()) -> TrajectoryMixture:
    if anchors.K != params.K or anchors.T != params.T:
        raise ValueError("anchor set does not match the predictor head")
    logits, raw = forward_batch(params, context_features)
    return TrajectoryMixture(logits[0], raw[0], anchors, frame)


def predict(params: PredictorParams, anchors: AnchorSet, history: PastHistory, dt: float) -> TrajectoryMixture:
    return forward(params, history_features(history, dt), anchors, history.pose)


# ---------------------------------------------------------------- losses

def gaussian_nll_and_grad(raw: np.ndarray, centers: np.ndarray, query: np.ndarray):
    """Per-step NLL of query under N(center + mu, Sigma) and its gradient w.r.t. raw params.

    Shapes broadcast over leading axes; returns nll (...) and grad (..., 5).
    """
    lsx = np.clip(raw[..., 2], LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    lsy = np.clip(raw[..., 3], LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    sx, sy = np.exp(lsx), np.exp(lsy)
    th = np.tanh(raw[..., 4])
    rho = RHO_MAX * th
    one_m = 1.0 - rho * rho
    zx = (query[..., 0] - centers[..., 0] - raw[..., 0]) / sx
    zy = (query[..., 1] - centers[..., 1] - raw[..., 1]) / sy
    quad = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / one_m
    nll = LOG_2PI + lsx + lsy + 0.5 * np.log(one_m) + 0.5 * quad

    ax = (zx - rho * zy) / one_m      # 0.5 d quad / d zx
    ay = (zy - rho * zx) / one_m
    g = np.empty(nll.shape + (5,))
    g[..., 0] = -ax / sx
    g[..., 1] = -ay / sy
    in_x = (raw[..., 2] > LOG_SIGMA_MIN) & (raw[..., 2] < LOG_SIGMA_MAX)
    in_y = (raw[..., 3] > LOG_SIGMA_MIN) & (raw[..., 3] < LOG_SIGMA_MAX)
    g[..., 2] = np.where(in_x, 1.0 - zx * ax, 0.0)
    g[..., 3] = np.where(in_y, 1.0 - zy * ay, 0.0)
    dnll_drho = (-rho - zx * zy) / one_m + rho * quad / one_m
    g[..., 4] = dnll_drho * RHO_MAX * (1.0 - th * th)
    return nll, g


def _identity_nll_and_grad(raw, centers, query):
    """Sigma fixed to I: NLL = log 2pi + |d|^2 / 2."""
    d = query - centers - raw[..., :2]
    nll = LOG_2PI + 0.5 * np.einsum("...i,...i->...", d, d)
    g = np.zeros(nll.shape + (5,))
    g[..., :2] = -d
    return nll, g


def component_nll(raw: np.ndarray, anchors: np.ndarray, local_gt: np.ndarray, with_sigma: bool = True):
    """Per-anchor summed step NLL (B, K) and its gradient (B, K, T, 5).

    raw (B, K, T, 5), anchors (K, T, 2), local_gt (B, T, 2).
    """
    fn = gaussian_nll_and_grad if with_sigma else _identity_nll_and_grad
    nll, g = fn(raw, anchors[None], local_gt[:, None])
    return nll.sum(axis=-1), g


def min_of_k_index(raw: np.ndarray, anchors: np.ndarray, local_gt: np.ndarray) -> np.ndarray:
    """argmin_k sum_t |a^k_t + mu^k_t - s_t|^2 per example; lowest index wins ties."""
    d = anchors[None] + raw[..., :2] - local_gt[:, None]
    return np.argmin(np.einsum("bktd,bktd->bk", d, d), axis=1)


@dataclass(frozen=True)
class LossConfig:
    kind: str = "multipath-hard"
    with_sigma: bool = True

    def __post_init__(self):
        if self.kind not in LOSSES:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {LOSSES}")


def head_loss(logits, raw, anchors, local_gt, loss: LossConfig, hard=None, soft=None):
    """Per-example losses plus gradients with respect to logits and raw parameters.

    The per-example weight vector w selects the anchor terms:
    loss = sum_k w_k [-log pi_k + sum_t NLL_kt].
    """
    B, K = logits.shape
    comp, g = component_nll(raw, anchors, local_gt, loss.with_sigma)
    if loss.kind == "multipath-soft":
        w = np.asarray(soft, dtype=np.float64)
        if w.shape != (B, K) or not np.allclose(w.sum(axis=1), 1.0, atol=1e-9) or np.any(w < 0):
            raise ValueError("soft assignment must be (B, K) probability vectors")
    else:
        if loss.kind == "min_of_k":
            idx = min_of_k_index(raw, anchors, local_gt)
        else:
            idx = np.asarray(hard, dtype=int).reshape(B)
            if np.any(idx < 0) or np.any(idx >= K):
                raise ValueError("hard assignment index out of range")
        w = np.zeros((B, K))
        w[np.arange(B), idx] = 1.0
    logp = log_softmax(logits)
    losses = np.einsum("bk,bk->b", w, comp - logp)
    dlogits = np.exp(logp) * w.sum(axis=1, keepdims=True) - w
    draw = g * w[:, :, None, None]
    return losses, dlogits, draw


def nll_loss(mix: TrajectoryMixture, gt: Trajectory, gt_pose: Pose | None, assignment) -> float:
    """Hard (integer index) or soft (weight vector) assignment NLL of one example."""
    local = points_to_frame(gt.waypoints, mix.frame if gt_pose is None else gt_pose)
    logits, raw = mix.logits[None], mix.params[None]
    if np.ndim(assignment) == 0:
        cfg = LossConfig("multipath-hard")
        losses, _, _ = head_loss(logits, raw, mix.anchors.anchors, local[None], cfg, hard=[int(assignment)])
    else:
        cfg = LossConfig("multipath-soft")
        losses, _, _ = head_loss(logits, raw, mix.anchors.anchors, local[None], cfg,
                                 soft=np.asarray(assignment, dtype=np.float64)[None])
    return float(losses[0])


def min_of_k_loss(mix: TrajectoryMixture, gt: Trajectory, gt_pose: Pose | None = None,
                  with_sigma: bool = True) -> float:
    local = points_to_frame(gt.waypoints, mix.frame if gt_pose is None else gt_pose)
    losses, _, _ = head_loss(mix.logits[None], mix.params[None], mix.anchors.anchors, local[None],
                             LossConfig("min_of_k", with_sigma))
    return float(losses[0])


# ---------------------------------------------------------------- backward

@dataclass
class Batch:
    features: np.ndarray            # (B, F)
    local_gt: np.ndarray            # (B, T, 2) agent-frame futures
    hard: np.ndarray | None = None  # (B,) anchor indices
    soft: np.ndarray | None = None  # (B, K) assignment weights
    ids: np.ndarray | None = None

    def __len__(self):
        return len(self.features)

    def take(self, idx) -> "Batch":
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return Batch(self.features[idx], self.local_gt[idx], pick(self.hard), pick(self.soft),
                     pick(self.ids))


def loss_and_grad(params: PredictorParams, batch: Batch, anchors: AnchorSet, loss: LossConfig,
                  flat=None):
    """Mean batch loss and its exact gradient with respect to the flat parameter vector."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if loss.with_sigma != params.with_sigma:
        raise ValueError("loss and predictor disagree on with_sigma")
    flat = params.flat if flat is None else flat
    out, acts = _mlp(params, batch.features, flat)
    logits, raw = split_head(out, params.K, params.T, params.with_sigma)
    with np.errstate(over="ignore", invalid="ignore"):   # non-finite losses are reported below
        losses, dlogits, draw = head_loss(logits, raw, anchors.anchors, batch.local_gt, loss,
                                          batch.hard, batch.soft)
    bad = ~np.isfinite(losses)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteLoss(i if batch.ids is None else batch.ids[i])
    B = len(batch)
    dout = np.empty_like(out)
    dout[:, :params.K] = dlogits
    if params.with_sigma:
        dout[:, params.K:] = draw.reshape(B, -1)
    else:
        dout[:, params.K:] = draw[..., :2].reshape(B, -1)
    dout /= B

    grad = np.empty_like(flat)
    layers = params.layers(flat)
    glayers = params.layers(grad)
    delta = dout
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW, gb = glayers[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i:
            delta = (delta @ W.T) * (1.0 - acts[i] ** 2)
    return float(losses.mean()), grad


def backward(params: PredictorParams, batch: Batch, anchors: AnchorSet, loss: LossConfig) -> np.ndarray:
    return loss_and_grad(params, batch, anchors, loss)[1]


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    total_steps: int = 20000
    warmup_fraction: float = 0.05
    seed: int = 0
    loss: str = "multipath-hard"
    K: int = 3
    temperature: float = 1.0
    with_sigma: bool = True
    hidden: tuple = (64, 64)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not (self.learning_rate > 0 and self.batch_size > 0 and self.total_steps >= 0):
            raise ValueError("learning rate and batch size must be positive, steps non-negative")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if self.loss == "multipath-soft" and not self.temperature > 0:
            raise ValueError("temperature must be positive")

    @property
    def loss_config(self) -> LossConfig:
        kind = "multipath-hard" if self.loss == "regression" else self.loss
        return LossConfig(kind, self.with_sigma)


def learning_rate(step: int, total_steps: int, peak: float, warmup_fraction: float) -> float:
    """Linear warmup to ``peak`` then cosine decay toward zero."""
    warmup = int(warmup_fraction * total_steps)
    if step < warmup:
        return peak * step / warmup
    span = max(total_steps - warmup, 1)
    return 0.5 * peak * (1.0 + math.cos(math.pi * (step - warmup) / span))


@dataclass
class TrainResult:
    params: PredictorParams
    log: list = field(default_factory=list)   # (step, lr, loss)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    if batch_size >= n:
        while True:
            yield np.arange(n)
    order = rng.permutation(n)
    pos = 0
    while True:
        if pos + batch_size > n:
            take = order[pos:]
            order = rng.permutation(n)
            pos = batch_size - len(take)
            yield np.concatenate([take, order[:pos]])
        else:
            yield order[pos:pos + batch_size]
            pos += batch_size


def train(config: TrainConfig, data: Batch, anchors: AnchorSet,
          init: PredictorParams | None = None, progress=None) -> TrainResult:
    """Adam on the mean batch loss with seeded shuffling; deterministic given the config."""
    if len(data) == 0:
        raise ValueError("empty training set")
    if data.local_gt.shape[1] != anchors.T:
        raise ValueError("anchors do not match the future horizon")
    if config.loss == "regression" and anchors.K != 1:
        raise ValueError("regression uses exactly one anchor")
    params = init if init is not None else init_params(
        data.features.shape[1], anchors.K, anchors.T, config.with_sigma, config.hidden, config.seed)
    params = params.copy()
    loss_cfg = config.loss_config
    rng = np.random.default_rng([config.seed, 1])
    m = np.zeros_like(params.flat)
    v = np.zeros_like(params.flat)
    log = []
    batches = _batches(len(data), config.batch_size, rng)
    for step in range(config.total_steps):
        idx = next(batches)
        try:
            loss, grad = loss_and_grad(params, data.take(idx), anchors, loss_cfg)
        except NonFiniteLoss as exc:
            raise TrainingDiverged(step, f"non-finite loss on example {exc.example_id}") from exc
        if not np.all(np.isfinite(grad)):
            raise TrainingDiverged(step, "non-finite gradient")
        lr = learning_rate(step, config.total_steps, config.learning_rate, config.warmup_fraction)
        m = config.beta1 * m + (1.0 - config.beta1) * grad
        v = config.beta2 * v + (1.0 - config.beta2) * grad * grad
        mhat = m / (1.0 - config.beta1 ** (step + 1))
        vhat = v / (1.0 - config.beta2 ** (step + 1))
        params.flat -= lr * mhat / (np.sqrt(vhat) + config.eps)
        log.append((step, lr, loss))
        if progress is not None:
            progress(step, lr, loss)
    return TrainResult(params, log)


# ---------------------------------------------------------------- linear baseline

@dataclass(frozen=True)
class LinearFit:
    """x(t) = alpha t + beta, y(t) = gamma t + delta with t in steps, t = 0 at the present."""

    alpha: float
    beta: float
    gamma: float
    delta: float


def linear_fit(history: PastHistory, times=None) -> LinearFit:
    w = history.waypoints
    H = len(w)
    t = np.arange(-H + 1, 1, dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
    if t.shape != (H,):
        raise ValueError("one time per history waypoint required")
    tc = t - t.mean()
    sxx = float(tc @ tc)
    if sxx == 0.0:
        raise ValueError("cannot fit a line: all timestamps identical")
    slope = tc @ (w - w.mean(axis=0)) / sxx
    icpt = w.mean(axis=0) - slope * t.mean()
    return LinearFit(float(slope[0]), float(icpt[0]), float(slope[1]), float(icpt[1]))


def linear_predict(fit: LinearFit, T: int, dt: float = 1.0) -> Trajectory:
    t = np.arange(1, T + 1, dtype=np.float64)
    return Trajectory(np.stack([fit.alpha * t + fit.beta, fit.gamma * t + fit.delta], axis=1), dt)
