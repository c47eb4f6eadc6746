"""Labeled input sets: CSV ingestion, save/round-trip, label bookkeeping."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DatasetFormatError


@dataclass
class LabeledPoint:
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """Feature matrix plus integer labels; immutable after construction."""

    features: np.ndarray  # (n, dimension) float64
    labels: np.ndarray  # (n,) int
    label_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DatasetFormatError("empty dataset")
        if self.features.shape[1] == 0:
            raise DatasetFormatError("dataset has no feature columns")
        if self.labels.shape != (self.features.shape[0],):
            raise DatasetFormatError("feature/label row count mismatch")
        if not np.all(np.isfinite(self.features)):
            raise DatasetFormatError("dataset contains non-finite features")
        if self.labels.min() < 0 or self.labels.max() >= self.label_count:
            raise DatasetFormatError(
                "labels must lie in [0, %d)" % self.label_count
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def point(self, i: int) -> LabeledPoint:
        return LabeledPoint(self.features[i], int(self.labels[i]))

    @property
    def points(self) -> list[LabeledPoint]:
        return [self.point(i) for i in range(len(self))]


def _parse_cell(cell: str, row: int, col: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DatasetFormatError(
            "non-numeric cell %r at row %d column %d" % (cell, row, col)
        )


def load_dataset(path, label_column="last", header: bool = False) -> Dataset:
    """Read a numeric CSV into a Dataset.

    The file has no header by default (``header=True`` skips one line).
    ``label_column`` is a 0-based column index or "last". Labels must be
    integers; every other cell is parsed as an IEEE double.
    """
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            for line_no, row in enumerate(reader, start=1):
                if header and line_no == 1:
                    continue
                if not row or (len(row) == 1 and row[0].strip() == ""):
                    continue
                rows.append((line_no, row))
    except FileNotFoundError:
        raise DatasetFormatError("dataset file not found: %s" % (path,))
    if not rows:
        raise DatasetFormatError("empty dataset: %s" % (path,))

    arity = len(rows[0][1])
    if arity < 2:
        raise DatasetFormatError("rows need at least one feature and a label")
    if label_column == "last":
        label_idx = arity - 1
    else:
        label_idx = int(label_column)
        if not 0 <= label_idx < arity:
            raise DatasetFormatError(
                "label column %d out of range for %d columns" % (label_idx, arity)
            )

    features, labels = [], []
    for line_no, row in rows:
        if len(row) != arity:
            raise DatasetFormatError(
                "ragged row at line %d: %d cells, expected %d"
                % (line_no, len(row), arity)
            )
        values = [_parse_cell(c, line_no, j) for j, c in enumerate(row)]
        raw_label = values[label_idx]
        if raw_label != int(raw_label):
            raise DatasetFormatError(
                "label %r at line %d is not an integer" % (row[label_idx], line_no)
            )
        if raw_label < 0:
            raise DatasetFormatError("negative label at line %d" % line_no)
        labels.append(int(raw_label))
        features.append([v for j, v in enumerate(values) if j != label_idx])

    labels = np.asarray(labels, dtype=int)
    return Dataset(np.asarray(features, dtype=float), labels, int(labels.max()) + 1)


def save_dataset(ds: Dataset, path) -> None:
    """Write features then label per row, doubles at 17 significant digits.

    load_dataset(save_dataset(ds)) reproduces the arrays bit-exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(len(ds)):
            writer.writerow(
                ["%.17g" % v for v in ds.features[i]] + [str(int(ds.labels[i]))]
            )


def label_histogram(ds: Dataset) -> dict[int, int]:
    """Count of points per label; counts sum to ``len(ds)``."""
    values, counts = np.unique(ds.labels, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def scale_minmax(ds: Dataset) -> Dataset:
    """Map every feature column onto [0, 1]; constant columns become 0.

    Never applied implicitly: clustering runs on raw inputs unless the
    caller opts in.
    """
    lo = ds.features.min(axis=0)
    span = ds.features.max(axis=0) - lo
    span[span == 0.0] = 1.0
    return Dataset((ds.features - lo) / span, ds.labels.copy(), ds.label_count)
