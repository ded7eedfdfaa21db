"""End-to-end acceptance checks; run with ``pytest tests/test_acceptance.py -v`` for the summary lines."""

import math
import time

import numpy as np
import pytest

import gradcheck
from anchortraj.anchors import AnchorSet, lloyd
from anchortraj.cli import EXIT_OK, main
from anchortraj.config import ExperimentConfig
from anchortraj.geom import PastHistory, Point2, Pose, Trajectory, points_from_frame
from anchortraj.metrics import ade, min_ade, min_msd
from anchortraj.mixture import TrajectoryMixture, log_likelihood, map_trajectory_set, metric_ll, occupancy, \
    padded_grid_spec
from anchortraj.model import init_params, n_features
from anchortraj.pipeline import (evaluate, fit, kmeans_from_scenes, learned_outputs, method_anchors,
                                 predict_mixtures, split_scenes)
from anchortraj.synthgen import ToyConfig, generate_dataset, oracle_metric_ll, sample_scene, transform_scene
from oracles import linear_space_log_likelihood, partition_distortion

BRANCH_PRIORS = (0.3, 0.5, 0.2)
SMALL = """\
[experiment]
seed = 11
workdir = out
n_scenes = 400

[train]
total_steps = 300
batch_size = 16

[eval]
mc_samples = 500
m_values = 1, 5
"""


def cli(cfg_path, *args):
    return main([args[0], "--config", str(cfg_path), *args[1:]])


@pytest.fixture(scope="session")
def toy_run():
    """50k toy scenes, K=3 k-means anchors, MultiPath and single-mode models with default settings."""
    cfg = ExperimentConfig()
    start = time.perf_counter()
    toy = cfg.toy_config()
    scenes = generate_dataset(toy, cfg.n_scenes)
    train_s, test_s = split_scenes(scenes, cfg.seed, cfg.eval.test_fraction)
    anchors, _ = kmeans_from_scenes(train_s, cfg.anchors.K, cfg.seed, cfg.anchors.max_iters, cfg.anchors.n_init)
    multipath = fit("multipath", cfg.train_config("multipath"), train_s, anchors)
    elapsed = time.perf_counter() - start
    reg_cfg = cfg.train_config("regression")
    reg_anchors = method_anchors("regression", reg_cfg, train_s, cfg.seed)
    regression = fit("regression", reg_cfg, train_s, reg_anchors)
    return dict(cfg=cfg, toy=toy, test=test_s, elapsed=elapsed, anchors=anchors, multipath=multipath.params,
                reg_anchors=reg_anchors, regression=regression.params)


@pytest.mark.slow
@pytest.mark.criterion(1)
def test_intent_recovery(toy_run, measured):
    anchors = toy_run["anchors"]
    bearings = np.arctan2(anchors.anchors[:, -1, 1], anchors.anchors[:, -1, 0])
    order = np.argsort(-bearings)          # left (positive bearing), middle, right
    mixes = predict_mixtures(toy_run["multipath"], anchors, toy_run["test"])
    pi = np.mean([m.weights for m in mixes], axis=0)[order]
    measured("mean pi " + ", ".join(f"{p:.3f}" for p in pi) + f"; {toy_run['elapsed']:.0f} s")
    assert np.all(np.abs(pi - BRANCH_PRIORS) <= 0.03)
    assert toy_run["elapsed"] <= 600


@pytest.mark.slow
@pytest.mark.criterion(2)
def test_likelihood_close_to_oracle(toy_run, measured):
    test = toy_run["test"]
    rep = evaluate(learned_outputs(toy_run["multipath"], toy_run["anchors"], test), test, (5,))
    oracle = oracle_metric_ll(toy_run["toy"], test, mc_samples=10_000, seed=toy_run["cfg"].seed)
    model = rep.mean("ll")
    measured(f"model {model:.4f}, oracle {oracle.mean:.4f} +/- {oracle.stderr:.4f}")
    assert abs(model - oracle.mean) <= 0.10
    assert model <= oracle.mean + 3 * oracle.stderr


@pytest.mark.slow
@pytest.mark.criterion(3)
def test_multimodal_beats_single_mode(toy_run, measured):
    test = toy_run["test"]
    mp = evaluate(learned_outputs(toy_run["multipath"], toy_run["anchors"], test), test, (5,))
    reg = evaluate(learned_outputs(toy_run["regression"], toy_run["reg_anchors"], test), test, (5,))
    measured(f"ll {mp.mean('ll'):.4f} vs {reg.mean('ll'):.4f}; "
             f"minADE_5 {mp.mean('min_ade_5'):.4f} vs ADE {reg.mean('ade'):.4f}")
    assert mp.mean("ll") - reg.mean("ll") >= 0.2
    assert mp.mean("min_ade_5") <= reg.mean("ade")


@pytest.mark.criterion(4)
def test_gradients_match_finite_differences(measured):
    worst = {kind: max(gradcheck.check(seed, kind) for seed in range(25)) for kind in gradcheck.KINDS}   # 4 x 25
    measured(", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert set(worst) == {"multipath-hard", "multipath-soft", "min_of_k", "regression"}
    assert max(worst.values()) < 1e-5


def _random_mixture(rng):
    K, T = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    params = np.concatenate([rng.normal(size=(K, T, 2)), rng.uniform(-1.5, 0.5, size=(K, T, 2)),
                             rng.uniform(-2, 2, size=(K, T, 1))], axis=-1)
    frame = Pose(Point2(*rng.normal(size=2) * 5), rng.uniform(-math.pi, math.pi))
    return TrajectoryMixture(rng.normal(size=K), params, AnchorSet(rng.normal(size=(K, T, 2)) * 3), frame)


@pytest.mark.criterion(5)
def test_mixture_density_validity(measured):
    rng = np.random.default_rng(2024)
    lo, hi, worst = math.inf, -math.inf, 0.0
    for _ in range(50):
        mix = _random_mixture(rng)
        mass = occupancy(mix, padded_grid_spec(mix, 6.0)).mass()
        lo, hi = min(lo, mass.min()), max(hi, mass.max())
        local = mix.means()[int(rng.integers(mix.K))] + rng.normal(size=(mix.T, 2))
        gt = Trajectory(points_from_frame(local, mix.frame))
        worst = max(worst, abs(log_likelihood(mix, gt, mix.frame) - linear_space_log_likelihood(mix, local)))
    measured(f"mass in [{lo:.5f}, {hi:.5f}], ll error {worst:.1e}")
    assert 0.99 <= lo and hi <= 1.01
    assert worst < 1e-10


@pytest.mark.criterion(6)
def test_kmeans_correctness(measured):
    rng = np.random.default_rng(6)
    for _ in range(20):
        N, T, K = int(rng.integers(5, 80)), int(rng.integers(1, 8)), int(rng.integers(1, 6))
        hist = lloyd(rng.normal(size=(N, T, 2)) * rng.uniform(0.1, 10), K, seed=int(rng.integers(1000))).history
        assert all(b <= a for a, b in zip(hist, hist[1:]))
    worst = 0.0
    for _ in range(10):
        X = rng.normal(size=(6, int(rng.integers(1, 6)), 2))
        worst = max(worst, abs(lloyd(X, 2, seed=0).distortion - partition_distortion(X, 2)))
    measured(f"max gap to exhaustive partition {worst:.1e}")
    assert worst < 1e-9


@pytest.mark.criterion(7)
def test_metric_examples():
    gt = Trajectory(np.cumsum(np.ones((8, 2)), axis=0))
    shifted = Trajectory(gt.waypoints + [3.0, 4.0])
    assert ade(shifted, gt) == 5.0
    assert min_msd([(1.0, shifted)], gt, 1) == 25.0
    rng = np.random.default_rng(7)
    preds = [(float(w), Trajectory(rng.normal(size=(8, 2)) * 4)) for w in rng.uniform(size=6)]
    assert min_ade(preds + [(0.0, gt)], gt, 7) == 0.0
    assert min_msd(preds + [(0.0, gt)], gt, 7) == 0.0
    values = [min_ade(preds, gt, M) for M in range(1, 7)]
    assert all(b <= a for a, b in zip(values, values[1:]))


@pytest.mark.criterion(8)
def test_rigid_motion_equivariance(measured):
    rng = np.random.default_rng(8)
    toy = ToyConfig()
    T = toy.T
    anchors = AnchorSet(rng.normal(size=(3, T, 2)) * 3, toy.dt)
    params = init_params(n_features(toy.H), 3, T, seed=5)
    scenes = []
    for i in range(20):
        steps = np.column_stack([rng.uniform(0.5, 2.0, toy.H), rng.normal(0, 0.5, toy.H)])
        history = PastHistory.from_waypoints(np.cumsum(steps, axis=0))   # curved, varied speeds
        scene = sample_scene(toy, rng, i, history)
        pose = Pose(Point2(*rng.normal(size=2) * 20), rng.uniform(-math.pi, math.pi))
        scenes.append(transform_scene(scene, pose))
    motions = [Pose(Point2(*rng.normal(size=2) * 100), rng.uniform(-math.pi, math.pi)) for _ in scenes]
    moved = [transform_scene(s, m) for s, m in zip(scenes, motions)]
    dev = dll = 0.0
    for s, m, mix, mix_moved in zip(scenes, motions, predict_mixtures(params, anchors, scenes),
                                    predict_mixtures(params, anchors, moved)):
        mv = transform_scene(s, m)
        for (w0, a), (w1, b) in zip(map_trajectory_set(mix), map_trajectory_set(mix_moved)):
            dev = max(dev, float(np.abs(points_from_frame(a.waypoints, m) - b.waypoints).max()))
            assert w0 == pytest.approx(w1, abs=1e-12)
        dll = max(dll, abs(metric_ll(mix, s.future, s.pose) - metric_ll(mix_moved, mv.future, mv.pose)))
    measured(f"max waypoint deviation {dev:.1e} m, ll change {dll:.1e}")
    assert dev < 1e-9 and dll < 1e-9


PIPELINE = (["gen"], ["anchors"], ["train", "--method", "multipath"], ["train", "--method", "regression"],
            ["train", "--method", "min_of_k"], ["eval"])
ARTIFACTS = ("dataset.jsonl", "anchors.txt", "multipath.ckpt.json", "regression.ckpt.json", "min_of_k.ckpt.json",
             "report.csv")


@pytest.mark.criterion(9)
def test_pipeline_is_byte_deterministic(tmp_path):
    outputs = []
    for name in ("first", "second"):
        d = tmp_path / name
        d.mkdir()
        (d / "run.ini").write_text(SMALL)
        for step in PIPELINE:
            assert cli(d / "run.ini", *step) == EXIT_OK
        outputs.append({a: (d / "out" / a).read_bytes() for a in ARTIFACTS})
    for a in ARTIFACTS:
        assert outputs[0][a] == outputs[1][a], a


@pytest.mark.slow
@pytest.mark.criterion(10)
def test_anchor_count_sweep(tmp_path, measured):
    (tmp_path / "run.ini").write_text("[experiment]\nworkdir = out\n")
    assert cli(tmp_path / "run.ini", "gen") == EXIT_OK
    assert cli(tmp_path / "run.ini", "sweep") == EXIT_OK
    lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert lines[1] == "K,metric_ll,ade,min_ade_5,distortion"
    ll = {int(r.split(",")[0]): float(r.split(",")[1]) for r in lines[2:]}
    measured(", ".join(f"K={k} {v:.4f}" for k, v in ll.items()))
    assert ll[3] > ll[1]
