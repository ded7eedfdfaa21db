"""Versioned text file formats. Every file starts with a ``<schema> <version>`` line.

dataset (``anchortraj-dataset 1``)
    JSON lines. Line 2 is a header object ``{"n": ..., "seed": ..., "toy": {...}}``;
    then one object per scene with keys, in order:
    ``index, seed, branch, omega, phi, past, future`` (past: H [x, y] pairs ending at
    the t = 0 position, future: T pairs).

anchors (``anchortraj-anchors 1``)
    ``K T dt`` then K*T rows ``k t x y``.

mixture (``anchortraj-mixture 1``)
    ``K T dt``, ``frame x y heading``, ``logits`` followed by K values, then K*T rows
    ``k t anchor_x anchor_y mu_x mu_y log_sx log_sy rho_raw``.

occupancy (``anchortraj-occupancy 1``)
    For each timestep a header ``grid origin_x origin_y cell_size width height t``
    followed by ``height`` rows of ``width`` densities (1/m^2), row 0 at origin_y.

checkpoint (``anchortraj-checkpoint 1``)
    JSON object: method, train config, anchors (inline) and their digest, the digest
    of the anchors file the model was trained against (or null), layer widths, head
    configuration and the flat parameter vector.

training log: CSV with header ``step,lr,loss``.

report (``anchortraj-report 1``): CSV, see :data:`REPORT_BASE_COLUMNS`. Rows with
``section=summary`` mirror the method table, ``section=category`` group by endpoint
category, ``section=per_step`` hold the per-step mean error (``group`` = step).
Absent metrics are empty cells. ``set_size`` is the number of trajectories the method
outputs; minADE_M with M > set_size is computed over the whole set.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .anchors import AnchorSet
from .geom import PastHistory, Point2, Pose, Trajectory, heading_pose
from .metrics import MetricsReport, metric_names
from .mixture import GridSpec, OccupancyGrid, TrajectoryMixture
from .model import PredictorParams, TrainConfig
from .synthgen import ToyConfig, ToyScene

DATASET = "anchortraj-dataset"
ANCHORS = "anchortraj-anchors"
MIXTURE = "anchortraj-mixture"
OCCUPANCY = "anchortraj-occupancy"
CHECKPOINT = "anchortraj-checkpoint"
REPORT = "anchortraj-report"
VERSION = 1


class FormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def _check_schema(line: str, schema: str):
    parts = line.split()
    if len(parts) != 2 or parts[0] != schema:
        raise FormatError(f"expected a {schema} file, got {line.strip()!r}")
    if int(parts[1]) != VERSION:
        raise FormatError(f"unsupported {schema} version {parts[1]}")


def _write(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------- dataset

def toy_config_dict(cfg: ToyConfig) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def write_dataset(path, scenes, cfg: ToyConfig):
    lines = [f"{DATASET} {VERSION}",
             json.dumps({"n": len(scenes), "seed": cfg.seed, "toy": toy_config_dict(cfg)})]
    for s in scenes:
        lines.append(json.dumps({
            "index": s.index, "seed": cfg.seed, "branch": s.branch,
            "omega": s.omega, "phi": s.phi,
            "past": s.history.waypoints.tolist(), "future": s.future.waypoints.tolist(),
        }))
    _write(path, "\n".join(lines) + "\n")


def read_dataset(path) -> tuple[list[ToyScene], ToyConfig]:
    with open(path) as fh:
        _check_schema(fh.readline(), DATASET)
        header = json.loads(fh.readline())
        cfg = ToyConfig(**header["toy"])
        scenes = []
        for line in fh:
            r = json.loads(line)
            past = np.asarray(r["past"], dtype=np.float64)
            scenes.append(ToyScene(PastHistory(past, heading_pose(past)),
                                   Trajectory(r["future"], cfg.dt), r["branch"], r["index"],
                                   r["omega"], r["phi"]))
    if len(scenes) != header["n"]:
        raise FormatError(f"header announces {header['n']} scenes, found {len(scenes)}")
    return scenes, cfg


# ---------------------------------------------------------------- anchors

def anchors_text(anchors: AnchorSet) -> str:
    lines = [f"{ANCHORS} {VERSION}", f"{anchors.K} {anchors.T} {_fmt(anchors.dt)}"]
    for k in range(anchors.K):
        for t in range(anchors.T):
            x, y = anchors.anchors[k, t]
            lines.append(f"{k} {t} {_fmt(x)} {_fmt(y)}")
    return "\n".join(lines) + "\n"


def write_anchors(path, anchors: AnchorSet):
    _write(path, anchors_text(anchors))


def parse_anchors(text: str) -> AnchorSet:
    lines = text.splitlines()
    _check_schema(lines[0], ANCHORS)
    K, T, dt = lines[1].split()
    K, T = int(K), int(T)
    a = np.empty((K, T, 2))
    rows = lines[2:]
    if len(rows) != K * T:
        raise FormatError(f"expected {K * T} anchor rows, got {len(rows)}")
    for row in rows:
        k, t, x, y = row.split()
        a[int(k), int(t)] = float(x), float(y)
    return AnchorSet(a, float(dt))


def read_anchors(path) -> AnchorSet:
    return parse_anchors(Path(path).read_text())


# ---------------------------------------------------------------- mixture

def mixture_text(mix: TrajectoryMixture) -> str:
    f = mix.frame
    lines = [f"{MIXTURE} {VERSION}", f"{mix.K} {mix.T} {_fmt(mix.anchors.dt)}",
             f"frame {_fmt(f.position.x)} {_fmt(f.position.y)} {_fmt(f.heading)}",
             "logits " + " ".join(_fmt(v) for v in mix.logits)]
    for k in range(mix.K):
        for t in range(mix.T):
            vals = list(mix.anchors.anchors[k, t]) + list(mix.params[k, t])
            lines.append(f"{k} {t} " + " ".join(_fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def parse_mixture(text: str) -> TrajectoryMixture:
    lines = text.splitlines()
    _check_schema(lines[0], MIXTURE)
    K, T, dt = lines[1].split()
    K, T = int(K), int(T)
    _, fx, fy, fh = lines[2].split()
    logits = [float(v) for v in lines[3].split()[1:]]
    anchors = np.empty((K, T, 2))
    params = np.empty((K, T, 5))
    for row in lines[4:]:
        vals = row.split()
        k, t = int(vals[0]), int(vals[1])
        nums = [float(v) for v in vals[2:]]
        anchors[k, t] = nums[:2]
        params[k, t] = nums[2:]
    return TrajectoryMixture(np.array(logits), params, AnchorSet(anchors, float(dt)),
                             Pose(Point2(float(fx), float(fy)), float(fh)))


# ---------------------------------------------------------------- occupancy

def occupancy_text(grid: OccupancyGrid) -> str:
    s = grid.spec
    lines = [f"{OCCUPANCY} {VERSION}"]
    for t, plane in enumerate(grid.density):
        lines.append(f"grid {_fmt(s.origin.x)} {_fmt(s.origin.y)} {_fmt(s.cell_size)} "
                     f"{s.width} {s.height} {t + 1}")
        lines.extend(" ".join(f"{v:.10g}" for v in row) for row in plane)
    return "\n".join(lines) + "\n"


def parse_occupancy(text: str) -> OccupancyGrid:
    lines = text.splitlines()
    _check_schema(lines[0], OCCUPANCY)
    planes, spec, i = [], None, 1
    while i < len(lines):
        _, ox, oy, cs, w, h, _t = lines[i].split()
        spec = GridSpec(Point2(float(ox), float(oy)), float(cs), int(w), int(h))
        rows = [[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + spec.height]]
        planes.append(np.array(rows))
        i += 1 + spec.height
    return OccupancyGrid(spec, np.stack(planes))


# ---------------------------------------------------------------- checkpoint

def write_checkpoint(path, method: str, params: PredictorParams, config: TrainConfig,
                     anchors: AnchorSet, anchors_file_digest: str | None):
    doc = {
        "schema": CHECKPOINT, "version": VERSION, "method": method,
        "train": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(config).items()},
        "anchors_digest": anchors.digest(),
        "anchors_file_digest": anchors_file_digest,
        "anchors": anchors_text(anchors),
        "widths": list(params.widths), "K": params.K, "T": params.T,
        "with_sigma": params.with_sigma,
        "params": params.flat.tolist(),
    }
    _write(path, json.dumps(doc, indent=1) + "\n")


def read_checkpoint(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != CHECKPOINT:
        raise FormatError(f"{path} is not a checkpoint")
    if doc.get("version") != VERSION:
        raise FormatError(f"unsupported checkpoint version {doc.get('version')}")
    anchors = parse_anchors(doc["anchors"])
    if anchors.digest() != doc["anchors_digest"]:
        raise FormatError("checkpoint anchors do not match their recorded digest")
    params = PredictorParams(np.array(doc["params"]), tuple(doc["widths"]), doc["K"], doc["T"],
                             doc["with_sigma"])
    return {"method": doc["method"], "params": params, "anchors": anchors,
            "anchors_file_digest": doc["anchors_file_digest"],
            "train": TrainConfig(**doc["train"])}


def write_training_log(path, log):
    lines = ["step,lr,loss"] + [f"{s},{lr:.10g},{loss:.10g}" for s, lr, loss in log]
    _write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- report

REPORT_BASE_COLUMNS = ["section", "method", "group", "n", "set_size"]


def report_columns(m_values) -> list[str]:
    cols = list(REPORT_BASE_COLUMNS)
    for name in metric_names(m_values):
        cols += [f"{name}_mean", f"{name}_std"]
    return cols


def _cell(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.10g}"


def _stat_cells(rep: MetricsReport, m_values) -> list[str]:
    cells = []
    for name in metric_names(m_values):
        s = rep.stats.get(name)
        cells += ["", ""] if s is None else [_cell(s.mean), _cell(s.std)]
    return cells


def report_text(reports: dict, m_values) -> str:
    """``reports`` maps method name -> MetricsReport (all over the same examples)."""
    buf = io.StringIO()
    buf.write(f"# {REPORT} {VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = report_columns(m_values)
    w.writerow(cols)
    for method, rep in reports.items():
        w.writerow(["summary", method, "all", rep.count, rep.set_size] + _stat_cells(rep, m_values))
    for method, rep in reports.items():
        for cat, sub in rep.categories.items():
            w.writerow(["category", method, cat.value, sub.count, sub.set_size] + _stat_cells(sub, m_values))
    for method, rep in reports.items():
        if not rep.per_step:
            continue
        T = len(rep.per_step["ade"])
        for t in range(T):
            row = dict.fromkeys(cols, "")
            row.update(section="per_step", method=method, group=t + 1, n=rep.count, set_size=rep.set_size)
            for name, vec in rep.per_step.items():
                row[f"{name}_mean"] = _cell(float(vec[t]))
            w.writerow([row[c] for c in cols])
    return buf.getvalue()


def read_report(path) -> list[dict]:
    with open(path) as fh:
        first = fh.readline()
        _check_schema(first.lstrip("# "), REPORT)
        return list(csv.DictReader(fh))
