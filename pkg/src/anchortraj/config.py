"""Experiment configuration: one INI document drives the whole pipeline.

Sections: ``[experiment]`` (seed, workdir), ``[toy]``, ``[anchors]``, ``[train]`` with
optional per-method overrides ``[train.multipath]``, ``[train.regression]``,
``[train.min_of_k]``, ``[eval]``, ``[grid]`` and ``[sweep]``. Angles are in radians,
lists are comma separated and floats are written with ``repr``, so a save/load cycle
is exact. Every seed derives from ``[experiment] seed``. Relative ``workdir`` paths
resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .model import TrainConfig
from .synthgen import ToyConfig

SCHEMA = "anchortraj-config"
VERSION = 1
METHODS = ("linear", "regression", "multipath", "min_of_k")
LEARNED = ("regression", "multipath", "min_of_k")

_DEFAULT_METHOD_TRAIN = {
    "multipath": {"loss": "multipath-hard"},
    "regression": {"loss": "regression", "K": 1},
    "min_of_k": {"loss": "min_of_k", "K": 5},
}


@dataclass
class AnchorsConfig:
    mode: str = "kmeans"
    K: int = 3
    max_iters: int = 100
    n_init: int = 10
    n_orientations: int = 16
    final_distances: tuple = (1.0, 2.0, 3.0, 4.0)
    include_stationary: bool = True


@dataclass
class EvalConfig:
    methods: tuple = METHODS
    m_values: tuple = (1, 5, 10)
    test_fraction: float = 0.1
    mc_samples: int = 10_000
    oracle: bool = True


@dataclass
class GridConfig:
    cell_size: float = 0.05
    pad_sigmas: float = 6.0


@dataclass
class SweepConfig:
    k_values: tuple = (1, 2, 3, 4, 6)


@dataclass
class ExperimentConfig:
    seed: int = 0
    workdir: str = "run"
    n_scenes: int = 50_000
    toy: ToyConfig = field(default_factory=ToyConfig)
    anchors: AnchorsConfig = field(default_factory=AnchorsConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_overrides: dict = field(default_factory=lambda: {m: dict(v) for m, v in _DEFAULT_METHOD_TRAIN.items()})
    eval: EvalConfig = field(default_factory=EvalConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def workpath(self) -> Path:
        p = Path(self.workdir)
        return p if p.is_absolute() else self.base_dir / p

    def path(self, name: str) -> Path:
        return self.workpath / name

    def toy_config(self) -> ToyConfig:
        return replace(self.toy, seed=self.seed)

    def train_config(self, method: str) -> TrainConfig:
        """Shared [train] settings with the method's overrides; seed offset per method."""
        if method not in LEARNED:
            raise ValueError(f"{method!r} is not a learned method")
        over = dict(self.train_overrides.get(method, {}))
        over.setdefault("seed", self.seed * 1000 + LEARNED.index(method))
        if method == "multipath":
            over.setdefault("K", self.anchors.K)
        return replace(self.train, **over)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)


# ---------------------------------------------------------------- (de)serialisation

def _to_str(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_to_str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str, like):
    if isinstance(like, bool):
        low = text.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(like, (tuple, list)):
        items = [s for s in (p.strip() for p in text.split(",")) if s]
        proto = like[0] if len(like) else 0.0
        return tuple(_parse(s, proto) for s in items)
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text.strip()


def _section_values(obj) -> dict:
    return {f.name: _to_str(getattr(obj, f.name)) for f in fields(obj)}


def _apply(obj, items: dict, section: str):
    known = {f.name: f for f in fields(obj)}
    kw = {}
    for key, text in items.items():
        if key not in known:
            raise ValueError(f"unknown key {key!r} in [{section}]")
        kw[key] = _parse(text, getattr(obj, key))
    return replace(obj, **kw)


def to_ini(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {"schema": f"{SCHEMA} {VERSION}", "seed": str(cfg.seed),
                        "workdir": cfg.workdir, "n_scenes": str(cfg.n_scenes)}
    toy = _section_values(cfg.toy)
    toy.pop("seed")
    cp["toy"] = toy
    cp["anchors"] = _section_values(cfg.anchors)
    train = _section_values(cfg.train)
    train.pop("seed")
    cp["train"] = train
    for method in LEARNED:
        over = cfg.train_overrides.get(method, {})
        cp[f"train.{method}"] = {k: _to_str(v) for k, v in over.items()}
    cp["eval"] = _section_values(cfg.eval)
    cp["grid"] = _section_values(cfg.grid)
    cp["sweep"] = _section_values(cfg.sweep)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def from_ini(text: str, base_dir: Path | str = ".") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    cfg = ExperimentConfig(base_dir=Path(base_dir))
    if cp.has_section("experiment"):
        exp = dict(cp["experiment"])
        schema = exp.pop("schema", f"{SCHEMA} {VERSION}").split()
        if schema[0] != SCHEMA or int(schema[1]) != VERSION:
            raise ValueError(f"unsupported config schema {' '.join(schema)!r}")
        for key, text_value in exp.items():
            if key not in ("seed", "workdir", "n_scenes"):
                raise ValueError(f"unknown key {key!r} in [experiment]")
            setattr(cfg, key, text_value if key == "workdir" else int(text_value))
    sections = {"toy": "toy", "anchors": "anchors", "train": "train", "eval": "eval",
                "grid": "grid", "sweep": "sweep"}
    for sec, attr in sections.items():
        if cp.has_section(sec):
            setattr(cfg, attr, _apply(getattr(cfg, attr), dict(cp[sec]), sec))
    train_fields = {f.name: getattr(cfg.train, f.name) for f in fields(TrainConfig)}
    for method in LEARNED:
        sec = f"train.{method}"
        if cp.has_section(sec):
            over = {}
            for key, text_value in cp[sec].items():
                if key not in train_fields:
                    raise ValueError(f"unknown key {key!r} in [{sec}]")
                over[key] = _parse(text_value, train_fields[key])
            cfg.train_overrides[method] = over
    for sec in cp.sections():
        if sec not in sections and sec != "experiment" and not sec.startswith("train."):
            raise ValueError(f"unknown section [{sec}]")
    for m in cfg.eval.methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r} in [eval]")
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    return from_ini(path.read_text(), path.parent)


def save(cfg: ExperimentConfig, path):
    Path(path).write_text(to_ini(cfg))


def as_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d.pop("base_dir")
    return d
