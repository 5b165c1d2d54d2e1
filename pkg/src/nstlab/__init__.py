"""Nullspace tuning over partial-label equivalence classes, with semi-supervised baselines."""

from .datagen import (AugmentPolicy, Dataset, EquivalenceClass, PairBatch, PartialDataset, augment,
                      build_equivalence_classes, load_dataset_csv, make_dataset, sample_equiv_pairs,
                      save_dataset_csv, split_semi)
from .ndgrad import GradientMap, Tensor, apply, backward, finite_diff_grad
from .nnmodel import MlpParams, ModelConfig, ema_update, init_params, load_params, predict_proba, save_params
from .trainer import METHODS, RunResult, TrainConfig, evaluate, rampup_weight, train

__version__ = "0.1.0"
