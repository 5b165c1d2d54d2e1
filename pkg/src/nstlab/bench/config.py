"""Strict TOML experiment configuration.

A file holds either an ``[experiment]`` table (a sweep) or a ``[grid]`` table
(a univariate hyperparameter search), plus optional ``[dataset]`` and
``[train]`` tables.  Unknown keys, wrong types and missing required keys raise
:class:`~nstlab.errors.ConfigError` naming the offending key.

Minimal sweep::

    [experiment]
    methods = ["supervised", "nst"]
    n_labeled = [4, 8]
    seeds = [0, 1, 2]

Defaults for every other key are the dataclass field defaults below and in
:class:`~nstlab.trainer.TrainConfig`.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import tomli
import tomli_w

from ..datagen import Dataset, PartialDataset, build_equivalence_classes, load_dataset_csv, make_dataset, split_semi
from ..errors import ConfigError
from ..trainer import METHODS, TrainConfig

GRID_PARAMS = ("alpha", "lambda_U", "lambda_E")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "two-moons"
    n: int = 1000
    seed: int = 0
    noise: float = 0.1
    k: int = 3
    spread: float = 1.0
    dim: int = 2
    path: str = ""          # load this CSV instead of generating
    n_validation: int = 0
    n_test: int = 200
    classes: str = "per-label"   # per-label | fixed-size | none
    class_size: int = 2

    def __post_init__(self):
        if self.classes not in ("per-label", "fixed-size", "none"):
            raise ConfigError(f"dataset.classes: expected per-label, fixed-size or none, got {self.classes!r}")

    @property
    def name(self) -> str:
        return Path(self.path).stem if self.path else self.kind

    def load(self) -> Dataset:
        return _load_dataset(self)

    def partial(self, n_labeled: int, seed: int) -> PartialDataset:
        part = split_semi(self.load(), n_labeled, self.n_validation, self.n_test, seed=seed)
        if self.classes == "none":
            return part
        return build_equivalence_classes(part, self.classes, seed=seed, size=self.class_size)


@lru_cache(maxsize=8)
def _load_dataset(spec: DatasetSpec) -> Dataset:
    if spec.path:
        return load_dataset_csv(spec.path)
    return make_dataset(spec.kind, spec.n, spec.seed, noise=spec.noise, k=spec.k, spread=spec.spread, dim=spec.dim)


@dataclass(frozen=True)
class ExperimentSpec:
    methods: tuple[str, ...]
    n_labeled: tuple[int, ...]
    seeds: tuple[int, ...]
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str = "results"
    jobs: int = 1
    record_seconds: bool = False

    def __post_init__(self):
        for name in ("methods", "n_labeled", "seeds"):
            value = tuple(getattr(self, name))
            object.__setattr__(self, name, value)
            if not value:
                raise ConfigError(f"experiment.{name}: must be nonempty")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"experiment.methods: unknown method {m!r}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("experiment.seeds: seeds must be distinct")
        if self.jobs < 1:
            raise ConfigError("experiment.jobs: must be >= 1")


@dataclass(frozen=True)
class GridSpec:
    param: str
    values: tuple[float, ...]
    n_labeled: int
    seeds: tuple[int, ...]
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(method="mixmatch-nst"))
    out: str = "results"
    jobs: int = 1
    record_seconds: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.param not in GRID_PARAMS:
            raise ConfigError(f"grid.param: expected one of {GRID_PARAMS}, got {self.param!r}")
        if not self.values:
            raise ConfigError("grid.values: empty grid")
        if not self.seeds:
            raise ConfigError("grid.seeds: must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("grid.seeds: seeds must be distinct")
        if self.param == "alpha" and min(self.values) <= 0:
            raise ConfigError("grid.values: alpha values must be > 0")
        if min(self.values) < 0:
            raise ConfigError("grid.values: weights must be >= 0")
        if self.jobs < 1:
            raise ConfigError("grid.jobs: must be >= 1")


# ---------------------------------------------------------------------------
# strict dict <-> dataclass conversion

def _check_type(key, value, hint):
    origin = typing.get_origin(hint)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {type(value).__name__}")
        item = typing.get_args(hint)[0]
        return tuple(_check_type(f"{key}[{i}]", v, item) for i, v in enumerate(value))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported field type {hint}")


def _build(cls, table: dict, prefix: str, skip=(), required=()):
    if not isinstance(table, dict):
        raise ConfigError(f"{prefix}: expected a table")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    for key in table:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}: unknown key")
    for key in required:
        if key not in table:
            raise ConfigError(f"{prefix}.{key}: missing required key")
    return {k: _check_type(f"{prefix}.{k}", v, hints[k]) for k, v in table.items()}


def spec_from_dict(doc: dict):
    for key in doc:
        if key not in ("experiment", "grid", "dataset", "train"):
            raise ConfigError(f"{key}: unknown table")
    if ("experiment" in doc) == ("grid" in doc):
        raise ConfigError("experiment/grid: exactly one of the two tables is required")
    dataset = DatasetSpec(**_build(DatasetSpec, doc.get("dataset", {}), "dataset"))
    if "experiment" in doc:
        kwargs = _build(ExperimentSpec, doc["experiment"], "experiment", skip=("dataset", "train"),
                        required=("methods", "n_labeled", "seeds"))
        train = TrainConfig(**_build(TrainConfig, doc.get("train", {}), "train"))
        return ExperimentSpec(dataset=dataset, train=train, **kwargs)
    kwargs = _build(GridSpec, doc["grid"], "grid", skip=("dataset", "train"),
                    required=("param", "values", "n_labeled", "seeds"))
    train = TrainConfig(**{"method": "mixmatch-nst", **_build(TrainConfig, doc.get("train", {}), "train")})
    return GridSpec(dataset=dataset, train=train, **kwargs)


def spec_to_dict(spec) -> dict:
    top = {}
    for f in dataclasses.fields(spec):
        if f.name in ("dataset", "train"):
            continue
        v = getattr(spec, f.name)
        top[f.name] = list(v) if isinstance(v, tuple) else v
    table = "experiment" if isinstance(spec, ExperimentSpec) else "grid"
    return {table: top, "dataset": dataclasses.asdict(spec.dataset), "train": spec.train.to_dict()}


def parse_config(path) -> ExperimentSpec | GridSpec:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from None
    return spec_from_dict(doc)


def dumps_config(spec) -> str:
    return tomli_w.dumps(spec_to_dict(spec))


def write_config(spec, path) -> None:
    Path(path).write_text(dumps_config(spec), encoding="utf-8")
