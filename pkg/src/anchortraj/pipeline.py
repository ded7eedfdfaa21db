"""Glue between the toy data, anchors, predictors and metrics."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from . import anchors as anc
from .anchors import AnchorSet
from .geom import points_to_frame
from .metrics import MethodOutput, MetricsReport, Stat, report
from .mixture import TrajectoryMixture, map_trajectory_set, metric_ll
from .model import (Batch, PredictorParams, TrainConfig, TrainResult, forward_batch, history_features,
                    linear_fit, linear_predict, train)
from .synthgen import ToyConfig, oracle_metric_ll


def split_indices(n: int, seed: int, test_fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/test split from a keyed hash of each example index."""
    if not 0 <= test_fraction <= 1:
        raise ValueError("test_fraction must be in [0, 1]")
    u = np.empty(n)
    for i in range(n):
        h = hashlib.blake2b(f"{seed}:{i}".encode(), digest_size=8).digest()
        u[i] = int.from_bytes(h, "little") / 2.0 ** 64
    test = u < test_fraction
    return np.flatnonzero(~test), np.flatnonzero(test)


def split_scenes(scenes, seed: int, test_fraction: float = 0.1):
    tr, te = split_indices(len(scenes), seed, test_fraction)
    return [scenes[i] for i in tr], [scenes[i] for i in te]


def local_futures(scenes) -> np.ndarray:
    return np.stack([points_to_frame(s.future.waypoints, s.pose) for s in scenes])


def training_batch(scenes, anchors: AnchorSet, dt: float, temperature: float | None = None) -> Batch:
    """Features, agent-frame futures and precomputed anchor assignments."""
    X = np.stack([history_features(s.history, dt) for s in scenes])
    L = local_futures(scenes)
    d = anc.squared_distances(L, anchors.anchors)
    hard = np.argmin(d, axis=1)
    soft = None if temperature is None else anc.soft_weights(d, temperature)
    return Batch(X, L, hard, soft, np.array([s.index for s in scenes]))


def kmeans_from_scenes(scenes, K: int, seed: int, max_iters: int = 100,
                       n_init: int = 10) -> tuple[AnchorSet, anc.KMeansResult]:
    if not scenes:
        raise ValueError("no scenes to cluster")
    result = anc.lloyd(local_futures(scenes), K, seed=seed, max_iters=max_iters, n_init=n_init)
    return AnchorSet(result.centroids, scenes[0].future.dt), result


def method_anchors(method: str, config: TrainConfig, train_scenes, seed: int,
                   multipath_anchors: AnchorSet | None = None) -> AnchorSet:
    T, dt = len(train_scenes[0].future), train_scenes[0].future.dt
    if method == "multipath":
        if multipath_anchors is None:
            raise ValueError("multipath needs an anchor set")
        return multipath_anchors
    if method == "regression":
        return kmeans_from_scenes(train_scenes, 1, seed)[0]
    if method == "min_of_k":
        return AnchorSet(np.zeros((config.K, T, 2)), dt)
    raise ValueError(f"unknown learned method {method!r}")


def fit(method: str, config: TrainConfig, train_scenes, anchors: AnchorSet, progress=None) -> TrainResult:
    if anchors.K != config.K:
        raise ValueError(f"config K={config.K} but {anchors.K} anchors")
    dt = train_scenes[0].future.dt
    temp = config.temperature if config.loss == "multipath-soft" else None
    return train(config, training_batch(train_scenes, anchors, dt, temp), anchors, progress=progress)


def predict_mixtures(params: PredictorParams, anchors: AnchorSet, scenes) -> list[TrajectoryMixture]:
    if not scenes:
        return []
    dt = scenes[0].future.dt
    X = np.stack([history_features(s.history, dt) for s in scenes])
    logits, raw = forward_batch(params, X)
    return [TrajectoryMixture(logits[i], raw[i], anchors, s.pose) for i, s in enumerate(scenes)]


def learned_outputs(params: PredictorParams, anchors: AnchorSet, scenes) -> list[MethodOutput]:
    outs = []
    for mix, s in zip(predict_mixtures(params, anchors, scenes), scenes):
        ll = metric_ll(mix, s.future, s.pose) if params.with_sigma else None
        outs.append(MethodOutput(map_trajectory_set(mix), ll))
    return outs


def linear_outputs(scenes) -> list[MethodOutput]:
    outs = []
    for s in scenes:
        pred = linear_predict(linear_fit(s.history), len(s.future), s.future.dt)
        outs.append(MethodOutput([(1.0, pred)], None))
    return outs


def evaluate(outputs: list[MethodOutput], scenes, m_values) -> MetricsReport:
    return report(outputs, [(s.future, s.pose) for s in scenes], m_values)


def oracle_report(toy: ToyConfig, scenes, mc_samples: int, seed: int, m_values) -> MetricsReport:
    est = oracle_metric_ll(toy, scenes, mc_samples, seed)
    stats = {"ll": Stat(est.mean, float(np.std(est.per_scene)) if est.per_scene is not None else 0.0)}
    return MetricsReport(len(scenes), 0, stats, tuple(m_values))


@dataclass
class SweepRow:
    K: int
    metric_ll: float
    ade: float
    min_ade_5: float
    distortion: float


def anchor_sweep(k_values, config: TrainConfig, train_scenes, test_scenes, seed: int) -> list[SweepRow]:
    """Train one MultiPath model per anchor count and evaluate it on the test scenes."""
    rows = []
    for K in k_values:
        anchors, km = kmeans_from_scenes(train_scenes, K, seed)
        res = fit("multipath", replace(config, K=K), train_scenes, anchors)
        rep = evaluate(learned_outputs(res.params, anchors, test_scenes), test_scenes, (5,))
        rows.append(SweepRow(K, rep.mean("ll") if rep.stats["ll"] else float("nan"),
                             rep.mean("ade"), rep.mean("min_ade_5"), km.distortion))
    return rows
