"""Synthetic datasets, semi-supervised splits, equivalence classes and augmentation.

Everything here is a pure function of its inputs and seed.  Index conventions:

* ``PartialDataset.labeled`` / ``unlabeled`` / ``validation`` / ``test`` are row
  indices into the parent :class:`Dataset`.
* ``EquivalenceClass.members`` and every pair in a :class:`PairBatch` index
  *positions within* ``PartialDataset.unlabeled``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyPairPoolError, LabelDomainError, ParseError

DATASET_KINDS = ("two-moons", "blobs", "rings")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    k: int
    seed: int | None = None
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ConfigError(f"features must be a nonempty n x d matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ConfigError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if y.min() < 0 or y.max() >= self.k:
            raise LabelDomainError(f"labels must lie in 0..{self.k - 1}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class EquivalenceClass:
    class_id: int
    members: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class PartialDataset:
    dataset: Dataset
    labeled: np.ndarray
    unlabeled: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    classes: tuple[EquivalenceClass, ...] = ()

    @property
    def k(self) -> int:
        return self.dataset.k

    @property
    def X_labeled(self):
        return self.dataset.features[self.labeled]

    @property
    def y_labeled(self):
        return self.dataset.labels[self.labeled]

    @property
    def X_unlabeled(self):
        return self.dataset.features[self.unlabeled]

    @property
    def hidden_labels(self):
        """True labels of the unlabeled rows; simulation and verification only."""
        return self.dataset.labels[self.unlabeled]

    @property
    def X_validation(self):
        return self.dataset.features[self.validation]

    @property
    def y_validation(self):
        return self.dataset.labels[self.validation]

    @property
    def X_test(self):
        return self.dataset.features[self.test]

    @property
    def y_test(self):
        return self.dataset.labels[self.test]

    def pair_pool_size(self) -> int:
        return sum(c.size * (c.size - 1) for c in self.classes)


@dataclass(frozen=True)
class PairBatch:
    pairs: np.ndarray  # (m, 2) positions into the unlabeled set

    def __len__(self):
        return len(self.pairs)

    @property
    def first(self):
        return self.pairs[:, 0]

    @property
    def second(self):
        return self.pairs[:, 1]


@dataclass(frozen=True)
class AugmentPolicy:
    kind: str = "identity"
    sigma: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "gaussian-jitter", "axis-flip"):
            raise ConfigError(f"unknown augmentation kind {self.kind!r}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"flip probability must lie in [0, 1], got {self.p}")

    @classmethod
    def jitter(cls, sigma):
        return cls("gaussian-jitter", sigma=sigma)

    @classmethod
    def flip(cls, p):
        return cls("axis-flip", p=p)


def _balanced_counts(n, k):
    return np.array([n // k + (i < n % k) for i in range(k)])


def make_dataset(kind: str, n: int, seed: int = 0, *, noise: float = 0.1, k: int = 3,
                 spread: float = 1.0, dim: int = 2) -> Dataset:
    """Generate a balanced synthetic classification dataset.

    ``two-moons`` and ``rings`` are two-class, two-dimensional problems controlled by
    ``noise``; ``blobs`` draws ``k`` isotropic Gaussian clusters of std ``spread`` in
    ``dim`` dimensions around centers uniform in [-10, 10]^dim.  Rows are shuffled.
    """
    if kind not in DATASET_KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    if noise < 0 or spread < 0:
        raise ConfigError("noise and spread must be nonnegative")
    n_classes = k if kind == "blobs" else 2
    if n_classes < 1 or dim < 1:
        raise ConfigError("k and dim must be >= 1")
    if n < n_classes:
        raise ConfigError(f"n={n} is smaller than the class count {n_classes}")
    rng = np.random.default_rng(seed)
    counts = _balanced_counts(n, n_classes)
    parts = []
    if kind == "two-moons":
        t0 = rng.uniform(0, np.pi, counts[0])
        t1 = rng.uniform(0, np.pi, counts[1])
        upper = np.column_stack([np.cos(t0), np.sin(t0)])
        lower = np.column_stack([1 - np.cos(t1), 0.5 - np.sin(t1)])
        parts = [upper, lower]
        parts = [p + rng.normal(0, noise, p.shape) for p in parts]
    elif kind == "rings":
        for c, radius in enumerate((1.0, 0.5)):
            t = rng.uniform(0, 2 * np.pi, counts[c])
            ring = radius * np.column_stack([np.cos(t), np.sin(t)])
            parts.append(ring + rng.normal(0, noise, ring.shape))
    else:
        centers = rng.uniform(-10, 10, size=(n_classes, dim))
        for c in range(n_classes):
            parts.append(centers[c] + rng.normal(0, spread, (counts[c], dim)))
    X = np.concatenate(parts)
    y = np.repeat(np.arange(n_classes), counts)
    order = rng.permutation(n)
    return Dataset(X[order], y[order], n_classes, seed=seed, name=kind)


def split_semi(dataset: Dataset, n_labeled: int, n_validation: int = 0, n_test: int = 0,
               seed: int = 0) -> PartialDataset:
    """Stratified labeled subset, random validation/test subsets, the rest unlabeled."""
    k, n = dataset.k, dataset.n
    if min(n_labeled, n_validation, n_test) < 0:
        raise ConfigError("subset sizes must be nonnegative")
    if n_labeled < k:
        raise ConfigError(f"n_labeled={n_labeled} is smaller than the class count {k}")
    if n_labeled + n_validation + n_test > n:
        raise ConfigError(f"n_labeled + n_validation + n_test = {n_labeled + n_validation + n_test} exceeds n={n}")
    rng = np.random.default_rng(seed)
    # which classes receive the remainder is itself randomised
    extra = np.zeros(k, dtype=int)
    extra[rng.permutation(k)[: n_labeled % k]] = 1
    per_class = n_labeled // k + extra
    labeled = []
    for c in range(k):
        idx = np.flatnonzero(dataset.labels == c)
        if len(idx) < per_class[c]:
            raise ConfigError(f"class {c} has {len(idx)} rows but needs {per_class[c]} labeled")
        labeled.append(rng.choice(idx, per_class[c], replace=False))
    labeled = np.sort(np.concatenate(labeled))
    rest = np.setdiff1d(np.arange(n), labeled)
    rest = rng.permutation(rest)
    validation = np.sort(rest[:n_validation])
    test = np.sort(rest[n_validation : n_validation + n_test])
    unlabeled = np.sort(rest[n_validation + n_test :])
    return PartialDataset(dataset, labeled, unlabeled, validation, test)


def build_equivalence_classes(partial: PartialDataset, mode="per-label", seed: int = 0,
                              size: int | None = None) -> PartialDataset:
    """Group unlabeled examples into classes known to share a hidden label.

    ``mode`` is ``"per-label"`` (one class per distinct hidden label) or
    ``"fixed-size"`` (each label group chunked into classes of ``size``; the last
    chunk of a group may be smaller).
    """
    hidden = partial.hidden_labels
    if mode == "fixed-size":
        if size is None or size < 2:
            raise ConfigError(f"fixed-size equivalence classes need size >= 2, got {size}")
    elif mode != "per-label":
        raise ConfigError(f"unknown equivalence-class mode {mode!r}")
    rng = np.random.default_rng(seed)
    classes = []
    for label in np.unique(hidden):
        members = np.flatnonzero(hidden == label)
        if mode == "per-label":
            classes.append(members)
            continue
        members = rng.permutation(members)
        classes.extend(np.sort(members[i : i + size]) for i in range(0, len(members), size))
    return replace(partial, classes=tuple(EquivalenceClass(i, m) for i, m in enumerate(classes)))


def sample_equiv_pairs(partial: PartialDataset, m: int, rng: np.random.Generator) -> PairBatch:
    """Draw ``m`` ordered pairs uniformly from all within-class ordered pairs.

    Pairs are distinct within the batch whenever the pool holds at least ``m``
    of them; otherwise they are drawn with replacement.
    """
    sizes = np.array([c.size for c in partial.classes], dtype=np.int64)
    counts = sizes * (sizes - 1)
    total = int(counts.sum())
    if total == 0:
        raise EmptyPairPoolError("no equivalence class has two or more members")
    if m <= total:
        flat = rng.choice(total, size=m, replace=False)
    else:
        flat = rng.integers(0, total, size=m)
    bounds = np.cumsum(counts)
    cls = np.searchsorted(bounds, flat, side="right")
    r = flat - (bounds[cls] - counts[cls])
    s = sizes[cls]
    j = r // (s - 1)
    kk = r % (s - 1)
    kk = kk + (kk >= j)
    pairs = np.empty((m, 2), dtype=np.int64)
    for i in range(m):
        members = partial.classes[cls[i]].members
        pairs[i] = members[j[i]], members[kk[i]]
    return PairBatch(pairs)


def augment(X, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if policy.kind == "identity" or (policy.kind == "gaussian-jitter" and policy.sigma == 0):
        return X.copy()
    if policy.kind == "gaussian-jitter":
        return X + rng.normal(0.0, policy.sigma, X.shape)
    # axis-flip: negate each coordinate independently with probability p
    flips = rng.random(X.shape) < policy.p
    return np.where(flips, -X, X)


def save_dataset_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(dataset.d)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def load_dataset_csv(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", line=1)
    header = rows[0]
    d = len(header) - 1
    if d < 1 or header != [f"f{i}" for i in range(d)] + ["label"]:
        raise ParseError(f"header must be f0,...,f{{d-1}},label; got {','.join(header)}", line=1)
    X, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise ParseError(f"expected {d + 1} cells, got {len(row)}", line=lineno)
        try:
            X.append([float(v) for v in row[:-1]])
            label = float(row[-1])
        except ValueError as exc:
            raise ParseError(f"non-numeric cell ({exc})", line=lineno) from None
        if not np.all(np.isfinite(X[-1])):
            raise ParseError("non-finite feature value", line=lineno)
        if label != int(label):
            raise LabelDomainError(f"line {lineno}: label {row[-1]!r} is not an integer")
        y.append(int(label))
    if not y:
        raise ParseError("no data rows", line=2)
    y = np.array(y)
    k = int(y.max()) + 1
    if y.min() < 0 or len(np.unique(y)) != k:
        raise LabelDomainError(f"labels must be 0-based contiguous integers; found {sorted(set(y.tolist()))}")
    return Dataset(np.array(X), y, k, name=path.stem)
