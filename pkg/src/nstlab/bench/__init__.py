"""Benchmark harness: configs, sweeps, grid search, plots and embeddings."""

from .config import DatasetSpec, ExperimentSpec, GridSpec, dumps_config, parse_config, write_config
from .embed import embed_features, pca_2d, write_embedding_csv
from .plot import plot_curves
from .sweep import AggregateRow, ResultRow, aggregate, grid_search, mean_std, read_aggregate_csv, read_raw_csv, run_sweep

__all__ = [
    "DatasetSpec", "ExperimentSpec", "GridSpec", "parse_config", "dumps_config", "write_config",
    "embed_features", "pca_2d", "write_embedding_csv", "plot_curves",
    "ResultRow", "AggregateRow", "aggregate", "mean_std", "run_sweep", "grid_search",
    "read_raw_csv", "read_aggregate_csv",
]
