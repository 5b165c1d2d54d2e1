"""Command-line entry point: ``nstlab <command> [--config PATH] [--out DIR] [--seed N] [--jobs N]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench.config import ExperimentSpec, GridSpec, parse_config
from .bench.embed import embed_features, write_embedding_csv
from .bench.plot import plot_curves
from .bench.sweep import grid_search, run_sweep
from .datagen import load_dataset_csv, save_dataset_csv
from .errors import ConfigError, NstlabError
from .nnmodel import load_params, save_params
from .trainer import train

log = logging.getLogger("nstlab")


def _load(args, want=None):
    if not args.config:
        raise ConfigError("--config: required for this command")
    spec = parse_config(args.config)
    if want is not None and not isinstance(spec, want):
        raise ConfigError(f"{args.config}: expected an [{'experiment' if want is ExperimentSpec else 'grid'}] table")
    if args.jobs is not None:
        spec = replace(spec, jobs=args.jobs)
    return spec


def _out(args, spec=None) -> Path:
    out = Path(args.out or (spec.out if spec is not None else "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args):
    spec = _load(args)
    dataset = spec.dataset if args.seed is None else replace(spec.dataset, seed=args.seed)
    path = _out(args, spec) / "dataset.csv"
    save_dataset_csv(dataset.load(), path)
    print(path)


def cmd_train(args):
    spec = _load(args, ExperimentSpec)
    seed = spec.seeds[0] if args.seed is None else args.seed
    n_labeled = spec.n_labeled[0]
    cfg = replace(spec.train, method=spec.methods[0], seed=seed)
    result = train(cfg, spec.dataset.partial(n_labeled, seed))
    out = _out(args, spec)
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "train_loss", "validation_error", "test_error"])
        for h in result.history:
            w.writerow([h.step, repr(h.train_loss),
                        "" if h.validation_error is None else repr(h.validation_error),
                        "" if h.test_error is None else repr(h.test_error)])
    save_params(result.params, out / "params.ntpm")
    print(f"{cfg.method} n_labeled={n_labeled} seed={seed} test_error={result.final_test_error}")


def cmd_sweep(args):
    spec = _load(args, ExperimentSpec)
    res = run_sweep(spec, _out(args, spec))
    for a in res.aggregates:
        print(f"{a.method:>14} {a.n_labeled:>6}  {100 * a.mean_error:6.2f} +/- {100 * a.std_error:5.2f} %  (n={a.n_seeds})")
    if res.failures:
        print(f"{len(res.failures)} run(s) failed; see failures.csv", file=sys.stderr)


def cmd_grid_search(args):
    spec = _load(args, GridSpec)
    res = grid_search(spec, _out(args, spec))
    for value, mean, std, n in res.aggregates:
        print(f"{res.param}={value:g}  {100 * mean:6.2f} +/- {100 * std:5.2f} %  (n={n})")
    print(f"selected {res.param}={res.selected:g}")


def cmd_plot(args):
    out = _out(args)
    src = Path(args.csv) if args.csv else out / "aggregate.csv"
    dst = Path(args.svg) if args.svg else out / "curves.svg"
    plot_curves(src, dst)
    print(dst)


def cmd_embed(args):
    if not args.params or not args.data:
        raise ConfigError("embed: --params and --data are required")
    params = load_params(args.params, requires_grad=False)
    data = load_dataset_csv(args.data)
    coords = embed_features(params, args.layer, data.features)
    path = _out(args) / "embedding.csv"
    write_embedding_csv(path, coords, data.labels)
    print(path)


COMMANDS = {
    "gen-data": (cmd_gen_data, "write the configured dataset as CSV"),
    "train": (cmd_train, "train the first method/budget of an experiment config once"),
    "sweep": (cmd_sweep, "run every (method, n_labeled, seed) cell and write results CSVs"),
    "grid-search": (cmd_grid_search, "univariate search over alpha, lambda_U or lambda_E"),
    "plot": (cmd_plot, "render an aggregate CSV as an SVG error curve"),
    "embed": (cmd_embed, "export a 2D PCA embedding of hidden activations"),
}


def _common(default):
    common = argparse.ArgumentParser(add_help=False, argument_default=default)
    common.add_argument("--config", help="TOML experiment or grid config")
    common.add_argument("--out", help="output directory (default: config's out, else ./results)")
    common.add_argument("--seed", type=int, help="override the seed (gen-data: dataset, train: run)")
    common.add_argument("--jobs", type=int, help="parallel runs for sweep / grid-search")
    common.add_argument("-v", "--verbose", action="store_true", default=False if default is None else default)
    return common


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = _common(None)
    sub_common = _common(argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="nstlab", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, parents=[sub_common])
        if name == "plot":
            p.add_argument("--csv", help="aggregate CSV (default: OUT/aggregate.csv)")
            p.add_argument("--svg", help="output SVG (default: OUT/curves.svg)")
        elif name == "embed":
            p.add_argument("--params", help="parameter file written by `train`")
            p.add_argument("--data", help="dataset CSV to embed")
            p.add_argument("--layer", type=int, default=1, help="1 = first hidden layer")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command][0](args)
    except (NstlabError, OSError) as exc:
        print(f"nstlab {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0
