"""Tabular dataset loading, normalization, splitting, and synthetic data.

Two on-disk formats are supported:

* dense CSV (comma separated, '.' decimal point, optional header row, one
  column holding integer class labels, by default the last column);
* sparse "label idx:val idx:val ..." text, one sample per line with 1-based
  strictly ascending indices; unspecified entries are zero and the overall
  dimensionality is the maximum index seen anywhere in the file.

Raw labels are remapped to contiguous 0..C-1 in sorted order of the distinct
raw values, so loading is reproducible without configuration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, SchemaError

# Tolerance used when flooring fraction*count; counters FP noise like
# 10*0.7 -> 6.999...
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class Dataset:
    """An in-memory classification dataset.

    features: (N, D) float64, labels: (N,) int64 with values in 0..C-1.
    Arrays are marked read-only; a Dataset never changes after construction.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    feature_names: list[str] | None = None
    # original on-disk label values in sorted order, when they were remapped
    label_values: tuple[int, ...] | None = None

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ConfigError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ConfigError(
                f"labels shape {labels.shape} does not match {features.shape[0]} rows"
            )
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ConfigError("labels must lie in 0..num_classes-1")
        if self.feature_names is not None and len(self.feature_names) != features.shape[1]:
            raise ConfigError("feature_names length does not match D")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.num_classes,
            self.feature_names,
            self.label_values,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test partition parameters.

    The validation set is carved out of the training portion:
    `validation_fraction_of_train` is a fraction of the train pool, not of N.
    """

    train_fraction: float = 0.7
    validation_fraction_of_train: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction <= 1.0):
            raise ConfigError("train_fraction must be in (0, 1]")
        if not (0.0 <= self.validation_fraction_of_train < 1.0):
            raise ConfigError("validation_fraction_of_train must be in [0, 1)")


@dataclass(frozen=True)
class NormStats:
    """Per-column z-score statistics (population stdev, i.e. divide by N).

    Columns that are constant in the fitting data get stdev 0 and are mapped
    to 0 for every input value; the inverse transform restores the fitted
    mean for such columns.
    """

    mean: np.ndarray
    std: np.ndarray

    def transform(self, features: np.ndarray) -> np.ndarray:
        scale = np.where(self.std > 0.0, 1.0 / np.where(self.std > 0.0, self.std, 1.0), 0.0)
        return (features - self.mean) * scale

    def inverse_transform(self, features: np.ndarray) -> np.ndarray:
        return features * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def _remap_labels(raw: list[float], where: str) -> tuple[np.ndarray, int, tuple[int, ...]]:
    """Map raw integer-valued labels onto 0..C-1 in sorted order."""
    for i, v in enumerate(raw):
        if not float(v).is_integer():
            raise SchemaError(f"non-integer label {v!r} in {where}, row {i + 1}")
    values = tuple(sorted(set(int(v) for v in raw)))
    lookup = {v: i for i, v in enumerate(values)}
    labels = np.array([lookup[int(v)] for v in raw], dtype=np.int64)
    return labels, len(values), values


def load_dense(
    path: str,
    has_header: bool = True,
    label_column: int | str | None = None,
) -> Dataset:
    """Load a dense CSV file.

    `label_column` may be a column index, a header name (requires a header),
    or None for the last column. Labels must be integer-valued.
    """
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    rows = [r for r in rows if r]  # ignore blank lines
    if not rows:
        raise ParseError(f"{path}: file is empty")

    names = None
    if has_header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: no data rows after header")

    width = len(rows[0])
    if isinstance(label_column, str):
        if names is None:
            raise ConfigError("label_column by name requires a header row")
        try:
            label_idx = names.index(label_column)
        except ValueError:
            raise ConfigError(f"label column {label_column!r} not found in header") from None
    elif label_column is None:
        label_idx = width - 1
    else:
        label_idx = int(label_column) % width

    feats, raw_labels = [], []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
        try:
            values = [float(c) for c in row]
        except ValueError as e:
            raise ParseError(f"{path}: row {i + 1}: {e}") from None
        raw_labels.append(values[label_idx])
        feats.append(values[:label_idx] + values[label_idx + 1 :])

    labels, c, values = _remap_labels(raw_labels, path)
    feature_names = None
    if names is not None:
        feature_names = names[:label_idx] + names[label_idx + 1 :]
    return Dataset(np.array(feats, dtype=np.float64), labels, c, feature_names, values)


def load_sparse_index_value(path: str) -> Dataset:
    """Load "label idx:val ..." text into a dense Dataset.

    Indices are 1-based and must be strictly ascending within a line;
    D is the maximum index seen in the file.
    """
    samples: list[list[tuple[int, float]]] = []
    raw_labels: list[float] = []
    max_idx = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split()
            try:
                raw_labels.append(float(tokens[0]))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: bad label {tokens[0]!r}") from None
            entries = []
            prev = 0
            for tok in tokens[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"{path}: line {lineno}: bad entry {tok!r}") from None
                if idx <= prev:
                    raise ParseError(
                        f"{path}: line {lineno}: index {idx} not strictly ascending"
                    )
                if idx < 1:
                    raise ParseError(f"{path}: line {lineno}: index {idx} is not 1-based")
                prev = idx
                entries.append((idx, val))
            max_idx = max(max_idx, prev)
            samples.append(entries)
    if not samples:
        raise ParseError(f"{path}: file is empty")
    if max_idx == 0:
        raise ParseError(f"{path}: no feature entries in file")

    features = np.zeros((len(samples), max_idx), dtype=np.float64)
    for i, entries in enumerate(samples):
        for idx, val in entries:
            features[i, idx - 1] = val
    labels, c, values = _remap_labels(raw_labels, path)
    return Dataset(features, labels, c, label_values=values)


def save_dense(ds: Dataset, path: str) -> None:
    """Write a Dataset as dense CSV with a header; label goes last.

    Labels are written back as their original on-disk values when the
    dataset was loaded from a file, so a save/load round trip is stable
    even if a subset is missing some class.
    """
    names = ds.feature_names or [f"f{i}" for i in range(ds.n_features)]
    values = ds.label_values or tuple(range(ds.num_classes))
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(list(names) + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [values[int(y)]])


def zscore_fit_transform(
    train: Dataset, others: list[Dataset] | None = None
) -> tuple[Dataset, list[Dataset], NormStats]:
    """Fit z-score statistics on `train` only and apply them everywhere."""
    if train.n_samples == 0:
        raise ConfigError("cannot fit normalization statistics on an empty dataset")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)  # population stdev
    stats = NormStats(mean, std)
    out_train = Dataset(stats.transform(train.features), train.labels, train.num_classes,
                        train.feature_names, train.label_values)
    out_others = [
        Dataset(stats.transform(ds.features), ds.labels, ds.num_classes, ds.feature_names,
                ds.label_values)
        for ds in (others or [])
    ]
    return out_train, out_others, stats


def _floor(x: float) -> int:
    return int(math.floor(x + _FLOOR_EPS))


def split(
    ds: Dataset, spec: SplitSpec, allow_empty_test: bool = False
) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle and partition into (train, val, test).

    Counts: the train pool is floor(N * train_fraction) and the remainder is
    test; within the pool, train keeps floor(pool * (1 - val_fraction)) and
    the rest is validation. Deterministic for a fixed spec.
    """
    n = ds.n_samples
    pool = _floor(n * spec.train_fraction)
    n_test = n - pool
    n_train = _floor(pool * (1.0 - spec.validation_fraction_of_train))
    n_val = pool - n_train

    if n_train == 0:
        raise ConfigError(f"train split is empty (N={n}, spec={spec})")
    if spec.validation_fraction_of_train > 0.0 and n_val == 0:
        raise ConfigError(f"validation split is empty (N={n}, spec={spec})")
    if n_test == 0 and not allow_empty_test:
        raise ConfigError("test split is empty; pass allow_empty_test to permit this")

    order = np.random.default_rng(spec.seed).permutation(n)
    idx_train = np.sort(order[:n_train])
    idx_val = np.sort(order[n_train : n_train + n_val])
    idx_test = np.sort(order[n_train + n_val :])
    return ds.subset(idx_train), ds.subset(idx_val), ds.subset(idx_test)


def synth_gaussian(
    n: int,
    d: int,
    c: int,
    seed: int,
    labeling: str = "random",
    mu: float = 3.0,
) -> Dataset:
    """Generate an i.i.d. standard-normal dataset.

    labeling="random" draws uniform labels (a chance-level task, used for the
    saturation sweeps). labeling="cluster-separable" additionally shifts each
    class's mean by mu along a unit vector supported on that class's block of
    coordinates, so the classes are separated by mu*sqrt(2) and a trained
    classifier can beat chance.
    """
    if n < 1 or d < 1 or c < 1:
        raise ConfigError("n, d and c must be positive")
    if labeling not in ("random", "cluster-separable"):
        raise ConfigError(f"unknown labeling {labeling!r}")
    gen = np.random.default_rng(seed)
    features = gen.standard_normal((n, d))
    labels = gen.integers(0, c, size=n)
    if labeling == "cluster-separable":
        if d < c:
            raise ConfigError("cluster-separable labeling needs d >= c")
        block = d // c
        shifts = np.zeros((c, d))
        for k in range(c):
            shifts[k, k * block : (k + 1) * block] = mu / math.sqrt(block)
        features = features + shifts[labels]
    return Dataset(features, labels, c)
