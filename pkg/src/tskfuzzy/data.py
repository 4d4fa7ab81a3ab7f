"""Tabular ingestion, mutual-information ranking, z-scoring and stratified splits."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyFile,
    EmptyRowSet,
    InvalidBins,
    MissingLabelColumn,
    NonBinaryLabel,
    NonNumericCell,
    SingleClass,
    TooFewSamplesPerClass,
)

CONTINUOUS = "continuous"
BINARY = "binary"

STD_FLOOR = 1e-8
DEFAULT_MI_BINS = 16


@dataclass(frozen=True)
class Dataset:
    columns: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    kinds: tuple[str, ...]

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns):
            raise DimensionMismatch(f"X has shape {self.X.shape} for {len(self.columns)} columns")
        if self.X.shape[0] != len(self.y):
            raise DimensionMismatch(f"X has {self.X.shape[0]} rows but y has {len(self.y)}")
        if len(self.kinds) != len(self.columns):
            raise DimensionMismatch("kinds length does not match columns")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.columns, self.X[rows], self.y[rows], self.kinds)

    def select(self, names: Sequence[str]) -> "Dataset":
        idx = [self.columns.index(n) for n in names]
        return Dataset(
            tuple(names), self.X[:, idx], self.y, tuple(self.kinds[i] for i in idx)
        )


@dataclass(frozen=True)
class StandardizationStats:
    means: np.ndarray
    stds: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.means)

    @classmethod
    def identity(cls, d: int) -> "StandardizationStats":
        return cls(np.zeros(d), np.ones(d))


@dataclass(frozen=True)
class FeatureRanking:
    scores: tuple[tuple[str, float], ...]

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.scores]

    def top(self, k: int | None) -> list[str]:
        return self.names if k is None else self.names[:k]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "score_nats"])
            for name, score in self.scores:
                w.writerow([name, repr(float(score))])


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray


def infer_kinds(X: np.ndarray) -> tuple[str, ...]:
    return tuple(
        BINARY if len(np.unique(X[:, j])) <= 2 else CONTINUOUS for j in range(X.shape[1])
    )


def _parse_rows(path: Path, label_column: str | None, skip: Sequence[str] = ()):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        header = [h.strip() for h in header]
        li = None
        if label_column is not None:
            if label_column not in header:
                raise MissingLabelColumn(label_column, path)
            li = header.index(label_column)
        for name in skip:
            if name not in header:
                warnings.warn(f"excluded feature {name!r} not present in {path}", stacklevel=3)
        dropped = {j for j, h in enumerate(header) if h in set(skip) and j != li}
        keep = [j for j in range(len(header)) if j != li and j not in dropped]
        columns = tuple(header[j] for j in keep)
        rows, labels = [], []
        # data rows are numbered from 1, the header being row 0
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise NonNumericCell(r, "<row>", f"{len(record)} fields, expected {len(header)}", path)
            if li is not None:
                raw_label = record[li].strip()
                try:
                    lab = float(raw_label)
                except ValueError:
                    raise NonBinaryLabel(r, raw_label, path) from None
                if lab not in (0.0, 1.0):
                    raise NonBinaryLabel(r, raw_label, path)
                labels.append(int(lab))
            values = []
            for j in keep:
                cell = record[j]
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(r, header[j], cell, path) from None
                if not math.isfinite(v):
                    raise NonNumericCell(r, header[j], cell, path)
                values.append(v)
            rows.append(values)
    if not rows:
        raise EmptyFile(f"{path} has no data rows")
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return columns, X, np.asarray(labels, dtype=np.int64)


def load_csv(path, label_column: str, skip: Sequence[str] = ()) -> Dataset:
    """Read a header-first numeric CSV; the label column must hold only 0/1.

    Columns named in ``skip`` are dropped unparsed, so they may hold text.
    """
    columns, X, y = _parse_rows(Path(path), label_column, skip)
    return Dataset(columns, X, y, infer_kinds(X))


def read_header(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise EmptyFile(f"{path} is empty")
    return [h.strip() for h in header]


def load_table(path, only: Sequence[str] | None = None) -> tuple[tuple[str, ...], np.ndarray]:
    """Read a header-first numeric CSV with no label semantics.

    With ``only``, every other column is dropped unparsed.
    """
    skip = () if only is None else [h for h in read_header(path) if h not in set(only)]
    columns, X, _ = _parse_rows(Path(path), None, skip)
    return columns, X


def with_kinds(ds: Dataset, binary: Sequence[str] = (), continuous: Sequence[str] = ()) -> Dataset:
    """Override inferred feature kinds by column name."""
    kinds = list(ds.kinds)
    for names, kind in ((binary, BINARY), (continuous, CONTINUOUS)):
        for name in names:
            if name not in ds.columns:
                raise DimensionMismatch(f"kind override names unknown column {name!r}")
            kinds[ds.columns.index(name)] = kind
    return Dataset(ds.columns, ds.X, ds.y, tuple(kinds))


def _quantile_bins(x: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0.0, 1.0, bins + 1))
    return np.searchsorted(edges[1:-1], x, side="right")


def mutual_information(feature, kind: str, y, bins: int = DEFAULT_MI_BINS) -> float:
    """Plug-in estimate of I(feature; y) in nats.

    Continuous features are discretized into ``bins`` equal-frequency bins;
    binary features use their raw values. A constant feature scores exactly 0.
    """
    x = np.asarray(feature, dtype=np.float64)
    y = np.asarray(y)
    if len(x) != len(y):
        raise DimensionMismatch("feature and labels differ in length")
    if kind == CONTINUOUS and bins < 2:
        raise InvalidBins(f"bins must be >= 2, got {bins}")
    if len(np.unique(x)) < 2:
        return 0.0
    if kind == BINARY:
        _, codes = np.unique(x, return_inverse=True)
    else:
        codes = _quantile_bins(x, bins)
    _, ycodes = np.unique(y, return_inverse=True)
    nx, ny = codes.max() + 1, ycodes.max() + 1
    joint = np.zeros((nx, ny), dtype=np.int64)
    np.add.at(joint, (codes, ycodes), 1)
    n = len(x)
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    mi = 0.0
    for a in range(nx):
        for b in range(ny):
            c = joint[a, b]
            if c:
                mi += (c / n) * math.log(c * n / (px[a] * py[b]))
    # rounding can leave a -1e-17 residue for independent features
    return max(mi, 0.0)


def rank_features(ds: Dataset, bins: int = DEFAULT_MI_BINS, exclude: Sequence[str] = ()) -> FeatureRanking:
    for name in exclude:
        if name not in ds.columns:
            warnings.warn(f"excluded feature {name!r} not present in dataset", stacklevel=2)
    excluded = set(exclude)
    scored = [
        (name, mutual_information(ds.X[:, j], ds.kinds[j], ds.y, bins))
        for j, name in enumerate(ds.columns)
        if name not in excluded
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return FeatureRanking(tuple(scored))


def fit_standardizer(ds: Dataset | np.ndarray, rows=None, std_floor: float = STD_FLOOR) -> StandardizationStats:
    X = ds.X if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    if rows is not None:
        rows = np.asarray(rows, dtype=np.intp)
        if rows.size == 0:
            raise EmptyRowSet("cannot fit a standardizer on zero rows")
        X = X[rows]
    if X.shape[0] == 0:
        raise EmptyRowSet("cannot fit a standardizer on zero rows")
    means = X.mean(axis=0)
    stds = np.maximum(X.std(axis=0), std_floor)
    return StandardizationStats(means, stds)


def apply_standardizer(X, stats: StandardizationStats) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != stats.dim:
        raise DimensionMismatch(f"expected {stats.dim} columns, got {X.shape[-1]}")
    return (X - stats.means) / stats.stds


def invert_standardizer(Z, stats: StandardizationStats) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[-1] != stats.dim:
        raise DimensionMismatch(f"expected {stats.dim} columns, got {Z.shape[-1]}")
    return Z * stats.stds + stats.means


def standardize_dataset(ds: Dataset, stats: StandardizationStats) -> Dataset:
    return Dataset(ds.columns, apply_standardizer(ds.X, stats), ds.y, ds.kinds)


def _round_half_away(v: float) -> int:
    return int(math.floor(abs(v) + 0.5)) * (1 if v >= 0 else -1)


def stratified_split(y, test_fraction: float = 0.2, seed: int = 0) -> SplitIndices:
    y = np.asarray(y)
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClass("stratified split needs both classes")
    rng = np.random.default_rng(seed)
    members = [np.flatnonzero(y == c) for c in classes]
    counts = [_round_half_away(len(m) * test_fraction) for m in members]
    target = _round_half_away(len(y) * test_fraction)
    larger = int(np.argmax([len(m) for m in members]))
    counts[larger] += target - sum(counts)
    counts[larger] = min(max(counts[larger], 0), len(members[larger]))
    test_parts, train_parts = [], []
    for idx, n_test in zip(members, counts):
        perm = rng.permutation(idx)
        test_parts.append(perm[:n_test])
        train_parts.append(perm[n_test:])
    return SplitIndices(
        np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))
    )


def kfold_indices(y, k: int = 5, seed: int = 0) -> list[SplitIndices]:
    y = np.asarray(y)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    classes, sizes = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise SingleClass("k-fold split needs both classes")
    if sizes.min() < k:
        raise TooFewSamplesPerClass(f"smallest class has {sizes.min()} members, need >= {k}")
    rng = np.random.default_rng(seed)
    ordered = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in classes])
    # dealing the class-grouped order round-robin keeps each class within +-1 per fold
    fold_of = np.empty(len(y), dtype=np.intp)
    fold_of[ordered] = np.arange(len(y)) % k
    all_idx = np.arange(len(y))
    return [SplitIndices(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]
