"""Seeded sweeps over (method, n_labeled, seed), grid search and results CSVs."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ContractError, ParseError
from ..trainer import train
from .config import ExperimentSpec, GridSpec

log = logging.getLogger(__name__)

RAW_HEADER = ["method", "dataset", "n_labeled", "seed", "test_error", "seconds"]
AGG_HEADER = ["method", "dataset", "n_labeled", "mean_error", "std_error", "n_seeds"]
GRID_RAW_HEADER = ["param", "value"] + RAW_HEADER
GRID_AGG_HEADER = ["param", "value", "mean_error", "std_error", "n_seeds"]


@dataclass(frozen=True)
class ResultRow:
    method: str
    dataset: str
    n_labeled: int
    seed: int
    test_error: float
    seconds: float

    def __post_init__(self):
        if not 0.0 <= self.test_error <= 1.0:
            raise ContractError(f"test_error {self.test_error} outside [0, 1]")


@dataclass(frozen=True)
class AggregateRow:
    method: str
    dataset: str
    n_labeled: int
    mean_error: float
    std_error: float
    n_seeds: int


@dataclass(frozen=True)
class Failure:
    method: str
    n_labeled: int
    seed: int
    message: str


def mean_std(values) -> tuple[float, float]:
    """Mean and sample (n - 1) standard deviation; a single value has std 0."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1))


def _fmt(x: float) -> str:
    return repr(float(x))


def _run_cell(dataset_spec, train_cfg, method, n_labeled, seed, record_seconds):
    try:
        cfg = replace(train_cfg, method=method, seed=seed)
        result = train(cfg, dataset_spec.partial(n_labeled, seed))
        if result.final_test_error is None:
            raise ConfigError("dataset.n_test must be > 0 for sweeps")
        seconds = round(result.seconds, 3) if record_seconds else 0.0
        return ResultRow(method, dataset_spec.name, n_labeled, seed, result.final_test_error, seconds)
    except Exception as exc:  # a failed cell must not abort the sweep
        return Failure(method, n_labeled, seed, f"{type(exc).__name__}: {exc}")


def _execute(cells, jobs):
    if jobs <= 1:
        return [_run_cell(*c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, *zip(*cells)))


def aggregate(rows: list[ResultRow]) -> list[AggregateRow]:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r.method, r.dataset, r.n_labeled), []).append(r.test_error)
    out = []
    for (method, dataset, n_labeled), errs in sorted(groups.items()):
        mean, std = mean_std(errs)
        out.append(AggregateRow(method, dataset, n_labeled, mean, std, len(errs)))
    return out


def _ensure_dir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_raw_csv(path, rows: list[ResultRow]) -> None:
    _write(path, RAW_HEADER, [[r.method, r.dataset, r.n_labeled, r.seed, _fmt(r.test_error), _fmt(r.seconds)]
                              for r in rows])


def write_aggregate_csv(path, rows: list[AggregateRow]) -> None:
    _write(path, AGG_HEADER, [[a.method, a.dataset, a.n_labeled, _fmt(a.mean_error), _fmt(a.std_error), a.n_seeds]
                              for a in rows])


def _write_failures(path, failures):
    _write(path, ["method", "n_labeled", "seed", "message"],
           [[f.method, f.n_labeled, f.seed, f.message] for f in failures])


def _read(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ParseError(f"{path}: expected header {','.join(header)}", line=1)
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: expected {len(header)} cells, got {len(row)}", line=lineno)
        yield lineno, row


def read_raw_csv(path) -> list[ResultRow]:
    out = []
    for lineno, row in _read(path, RAW_HEADER):
        try:
            out.append(ResultRow(row[0], row[1], int(row[2]), int(row[3]), float(row[4]), float(row[5])))
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=lineno) from None
    return out


def read_aggregate_csv(path) -> list[AggregateRow]:
    out = []
    for lineno, row in _read(path, AGG_HEADER):
        try:
            out.append(AggregateRow(row[0], row[1], int(row[2]), float(row[3]), float(row[4]), int(row[5])))
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=lineno) from None
    return out


@dataclass
class SweepResult:
    rows: list[ResultRow]
    aggregates: list[AggregateRow]
    failures: list[Failure]
    raw_path: Path
    aggregate_path: Path


def run_sweep(spec: ExperimentSpec, out_dir=None) -> SweepResult:
    """Run every (method, n_labeled, seed) cell and persist raw and aggregate CSVs."""
    out = _ensure_dir(out_dir if out_dir is not None else spec.out)
    cells = [(spec.dataset, spec.train, m, n, s, spec.record_seconds)
             for m in spec.methods for n in spec.n_labeled for s in spec.seeds]
    results = _execute(cells, spec.jobs)
    rows = sorted((r for r in results if isinstance(r, ResultRow)), key=lambda r: (r.method, r.n_labeled, r.seed))
    failures = [r for r in results if isinstance(r, Failure)]
    for f in failures:
        log.warning("run failed: method=%s n_labeled=%d seed=%d: %s", f.method, f.n_labeled, f.seed, f.message)
    aggregates = aggregate(rows)
    raw_path, agg_path = out / "results.csv", out / "aggregate.csv"
    write_raw_csv(raw_path, rows)
    write_aggregate_csv(agg_path, aggregates)
    if failures:
        _write_failures(out / "failures.csv", failures)
    return SweepResult(rows, aggregates, failures, raw_path, agg_path)


@dataclass
class GridResult:
    param: str
    rows: list[tuple[float, ResultRow]]
    aggregates: list[tuple[float, float, float, int]]  # (value, mean, std, n_seeds)
    selected: float
    configs: dict
    failures: list[Failure]


def grid_search(spec: GridSpec, out_dir=None) -> GridResult:
    """Vary ``spec.param`` over its grid with every other setting at the base values.

    The selected value is the argmin of the per-value mean test error (first
    value wins ties).
    """
    if not spec.values:
        raise ConfigError("grid.values: empty grid")
    out = _ensure_dir(out_dir if out_dir is not None else spec.out)
    configs = {v: replace(spec.train, **{spec.param: v}) for v in spec.values}
    cells, keys = [], []
    for v in spec.values:
        for s in spec.seeds:
            cells.append((spec.dataset, configs[v], configs[v].method, spec.n_labeled, s, spec.record_seconds))
            keys.append(v)
    results = _execute(cells, spec.jobs)
    rows = [(v, r) for v, r in zip(keys, results) if isinstance(r, ResultRow)]
    failures = [r for r in results if isinstance(r, Failure)]
    for f in failures:
        log.warning("grid run failed: seed=%d: %s", f.seed, f.message)
    aggregates = []
    for v in spec.values:
        errs = [r.test_error for value, r in rows if value == v]
        if errs:
            mean, std = mean_std(errs)
            aggregates.append((v, mean, std, len(errs)))
    if not aggregates:
        raise RuntimeError("grid search: every run failed")
    selected = min(aggregates, key=lambda a: a[1])[0]
    _write(out / "grid_results.csv", GRID_RAW_HEADER,
           [[spec.param, _fmt(v), r.method, r.dataset, r.n_labeled, r.seed, _fmt(r.test_error), _fmt(r.seconds)]
            for v, r in rows])
    _write(out / "grid_aggregate.csv", GRID_AGG_HEADER,
           [[spec.param, _fmt(v), _fmt(m), _fmt(s), n] for v, m, s, n in aggregates])
    if failures:
        _write_failures(out / "grid_failures.csv", failures)
    return GridResult(spec.param, rows, aggregates, selected, configs, failures)
