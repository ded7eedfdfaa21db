"""Command line harness: ``anchortraj <command> --config run.ini [--seed N] [--out PATH]``.

Commands and the files they write in the config's workdir:

    gen         dataset.jsonl
    anchors     anchors.txt            (--mode kmeans|enumerate)
    train       <method>.ckpt.json and <method>.log.csv   (--method)
    eval        report.csv             (--methods linear,regression,multipath,min_of_k)
    occupancy   grid_<id>.txt          (--example-id, --method)
    plot        plot_<id>.svg          (--example-ids, --method)
    sweep       sweep.csv              (anchor-count sweep over [sweep] k_values)

``--out`` replaces the output path of the command (a directory for ``plot``).

Exit codes: 0 success, 1 usage or input error, 2 numerical failure (non-finite loss
or divergence during training).
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import formats, pipeline
from .anchors import enumerate_anchors
from .mixture import occupancy, padded_grid_spec
from .plotting import plot_mixture
from .synthgen import generate_dataset

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
SWEEP = "anchortraj-sweep"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; numerical failures own that code here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ids(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated id list: {text!r}")


def _methods(text: str) -> list[str]:
    out = [s.strip() for s in text.split(",") if s.strip()]
    for m in out:
        if m not in cfgmod.METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="experiment INI file")
    common.add_argument("--seed", type=int, help="override [experiment] seed")
    common.add_argument("--out", type=Path, help="override the output path")
    p = _Parser(prog="anchortraj", description="anchor-based multimodal trajectory prediction")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="generate the toy intersection dataset")
    a = sub.add_parser("anchors", parents=[common], help="fit or enumerate anchor trajectories")
    a.add_argument("--mode", choices=("kmeans", "enumerate"))
    t = sub.add_parser("train", parents=[common], help="train one learned method")
    t.add_argument("--method", choices=cfgmod.LEARNED, default="multipath")
    e = sub.add_parser("eval", parents=[common], help="evaluate methods on the test split")
    e.add_argument("--methods", type=_methods)
    o = sub.add_parser("occupancy", parents=[common], help="export occupancy grids for one example")
    o.add_argument("--example-id", type=int, required=True)
    o.add_argument("--method", choices=cfgmod.LEARNED, default="multipath")
    pl = sub.add_parser("plot", parents=[common], help="draw predicted mixtures as SVG")
    pl.add_argument("--example-ids", type=_ids, required=True)
    pl.add_argument("--method", choices=cfgmod.LEARNED, default="multipath")
    sub.add_parser("sweep", parents=[common], help="train and evaluate one model per anchor count")
    return p


# ---------------------------------------------------------------- helpers

def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} not found: {path} (run the earlier pipeline step first)")
    return path


def _load_split(cfg: cfgmod.ExperimentConfig):
    scenes, _ = formats.read_dataset(_need(cfg.path("dataset.jsonl"), "dataset"))
    return scenes, *pipeline.split_scenes(scenes, cfg.seed, cfg.eval.test_fraction)


def _anchors_for(cfg, method: str, train_scenes, train_cfg):
    """Anchor set for a method plus the digest of the anchors file it depends on."""
    if method == "multipath":
        path = _need(cfg.path("anchors.txt"), "anchors file")
        return formats.read_anchors(path), file_digest(path)
    return pipeline.method_anchors(method, train_cfg, train_scenes, cfg.seed), None


def _load_checkpoint(cfg, method: str):
    ckpt = formats.read_checkpoint(_need(cfg.path(f"{method}.ckpt.json"), f"{method} checkpoint"))
    if ckpt["method"] != method:
        raise UsageError(f"checkpoint holds {ckpt['method']!r}, expected {method!r}")
    if method == "multipath":
        current = file_digest(_need(cfg.path("anchors.txt"), "anchors file"))
        if ckpt["anchors_file_digest"] != current:
            raise UsageError("multipath checkpoint was trained against a different anchors file "
                             f"({ckpt['anchors_file_digest']} != {current}); retrain")
    return ckpt


def _scene_by_id(scenes, example_id: int):
    for s in scenes:
        if s.index == example_id:
            return s
    raise UsageError(f"no example with id {example_id}")


# ---------------------------------------------------------------- commands

def cmd_gen(cfg, args):
    toy = cfg.toy_config()
    out = args.out or cfg.path("dataset.jsonl")
    scenes = generate_dataset(toy, cfg.n_scenes)
    formats.write_dataset(out, scenes, toy)
    counts = {b: sum(s.branch == b for s in scenes) for b in ("left", "middle", "right")}
    print(f"wrote {len(scenes)} scenes to {out}  branches {counts}")


def cmd_anchors(cfg, args):
    mode = args.mode or cfg.anchors.mode
    out = args.out or cfg.path("anchors.txt")
    if mode == "enumerate":
        toy = cfg.toy_config()
        anchors = enumerate_anchors(cfg.anchors.n_orientations, cfg.anchors.final_distances, toy.T,
                                    toy.dt, cfg.anchors.include_stationary)
        formats.write_anchors(out, anchors)
        print(f"wrote {anchors.K} enumerated anchors to {out}")
        return
    _, train_scenes, _ = _load_split(cfg)
    if cfg.anchors.K > len(train_scenes):
        raise UsageError(f"K={cfg.anchors.K} exceeds the {len(train_scenes)} training scenes")
    anchors, km = pipeline.kmeans_from_scenes(train_scenes, cfg.anchors.K, cfg.seed,
                                              cfg.anchors.max_iters, cfg.anchors.n_init)
    formats.write_anchors(out, anchors)
    print(f"wrote {anchors.K} k-means anchors to {out}  distortion {km.distortion:.6g} "
          f"(mean per example {km.distortion / len(train_scenes):.6g})")


def cmd_train(cfg, args):
    method = args.method
    train_cfg = cfg.train_config(method)
    _, train_scenes, _ = _load_split(cfg)
    if not train_scenes:
        raise UsageError("training split is empty")
    anchors, digest = _anchors_for(cfg, method, train_scenes, train_cfg)
    if method == "multipath":
        train_cfg = replace(train_cfg, K=anchors.K)
    every = max(train_cfg.total_steps // 10, 1)

    def progress(step, lr, loss):
        if step % every == 0 or step == train_cfg.total_steps - 1:
            print(f"step {step:6d}  lr {lr:.3e}  loss {loss:.5f}", file=sys.stderr)

    result = pipeline.fit(method, train_cfg, train_scenes, anchors, progress)
    out = args.out or cfg.path(f"{method}.ckpt.json")
    formats.write_checkpoint(out, method, result.params, train_cfg, anchors, digest)
    log_path = Path(out).with_name(f"{method}.log.csv") if args.out else cfg.path(f"{method}.log.csv")
    formats.write_training_log(log_path, result.log)
    print(f"wrote {out} and {log_path}")


def _format_table(reports, m_values) -> str:
    names = ["ll", "ade", "fde"] + [f"min_ade_{m}" for m in m_values]
    lines = ["method      " + " ".join(f"{n:>12s}" for n in names)]
    for method, rep in reports.items():
        cells = []
        for n in names:
            s = rep.stats.get(n)
            cells.append(f"{'-':>12s}" if s is None else f"{s.mean:12.4f}")
        lines.append(f"{method:<12s}" + " ".join(cells))
    return "\n".join(lines)


def cmd_eval(cfg, args):
    methods = args.methods or list(cfg.eval.methods)
    m_values = tuple(cfg.eval.m_values)
    _, _, test_scenes = _load_split(cfg)
    if not test_scenes:
        raise UsageError("test split is empty")
    reports = {}
    for method in methods:
        if method == "linear":
            outputs = pipeline.linear_outputs(test_scenes)
        else:
            ckpt = _load_checkpoint(cfg, method)
            outputs = pipeline.learned_outputs(ckpt["params"], ckpt["anchors"], test_scenes)
        reports[method] = pipeline.evaluate(outputs, test_scenes, m_values)
    toy = cfg.toy_config()
    if cfg.eval.oracle and toy.noise_std > 0:
        reports["oracle"] = pipeline.oracle_report(toy, test_scenes, cfg.eval.mc_samples, cfg.seed, m_values)
    out = args.out or cfg.path("report.csv")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(formats.report_text(reports, m_values))
    print(_format_table(reports, m_values))
    print(f"wrote {out}")


def cmd_occupancy(cfg, args):
    ckpt = _load_checkpoint(cfg, args.method)
    scenes, _ = formats.read_dataset(_need(cfg.path("dataset.jsonl"), "dataset"))
    scene = _scene_by_id(scenes, args.example_id)
    mix = pipeline.predict_mixtures(ckpt["params"], ckpt["anchors"], [scene])[0]
    spec = padded_grid_spec(mix, cfg.grid.pad_sigmas, cfg.grid.cell_size)
    grid = occupancy(mix, spec)
    out = args.out or cfg.path(f"grid_{args.example_id}.txt")
    formats._write(out, formats.occupancy_text(grid))
    mass = grid.mass()
    print(f"wrote {out}  {spec.width}x{spec.height} cells, mass per step in "
          f"[{mass.min():.4f}, {mass.max():.4f}]")


def cmd_plot(cfg, args):
    ckpt = _load_checkpoint(cfg, args.method)
    scenes, _ = formats.read_dataset(_need(cfg.path("dataset.jsonl"), "dataset"))
    chosen = [_scene_by_id(scenes, i) for i in args.example_ids]
    out_dir = args.out or cfg.workpath
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    for scene, mix in zip(chosen, pipeline.predict_mixtures(ckpt["params"], ckpt["anchors"], chosen)):
        # groundtruth samples: other scenes sharing this scene's past, up to 200 of them
        same = [s.future.waypoints for s in scenes
                if np.array_equal(s.history.waypoints, scene.history.waypoints)][:200]
        path = Path(out_dir) / f"plot_{scene.index}.svg"
        plot_mixture(path, mix, gt=scene.future.waypoints, samples=same,
                     title=f"{args.method} K={mix.K}, example {scene.index}")
        print(f"wrote {path}")


def sweep_text(rows) -> str:
    lines = [f"# {SWEEP} {formats.VERSION}", "K,metric_ll,ade,min_ade_5,distortion"]
    lines += [f"{r.K},{r.metric_ll:.10g},{r.ade:.10g},{r.min_ade_5:.10g},{r.distortion:.10g}" for r in rows]
    return "\n".join(lines) + "\n"


def cmd_sweep(cfg, args):
    _, train_scenes, test_scenes = _load_split(cfg)
    if not train_scenes or not test_scenes:
        raise UsageError("sweep needs non-empty train and test splits")
    rows = pipeline.anchor_sweep(cfg.sweep.k_values, cfg.train_config("multipath"),
                                 train_scenes, test_scenes, cfg.seed)
    out = args.out or cfg.path("sweep.csv")
    formats._write(out, sweep_text(rows))
    print(f"{'K':>3s} {'metric_ll':>10s} {'ade':>8s} {'minADE_5':>9s} {'distortion':>12s}")
    for r in rows:
        print(f"{r.K:3d} {r.metric_ll:10.4f} {r.ade:8.4f} {r.min_ade_5:9.4f} {r.distortion:12.5g}")
    print(f"wrote {out}")


COMMANDS = {"gen": cmd_gen, "anchors": cmd_anchors, "train": cmd_train, "eval": cmd_eval,
            "occupancy": cmd_occupancy, "plot": cmd_plot, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        COMMANDS[args.command](cfg, args)
    except FloatingPointError as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"anchortraj: numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"anchortraj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
