"""Feature vectors from channel kernels, CSV persistence, standardization.

The feature of an image is the concatenation of the three channel kernels
in R, G, B order with the anchor weight excluded; sigma never enters the
feature.  Dimension is 3 * (N^2 - 1): 24 / 45 / 72 / 144 for N = 3/4/5/7.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    KernelSizeMissingError,
    MixedKernelSizesError,
    SchemaMismatchError,
    TooFewRecordsError,
)


def feature_dim(kernel_size: int) -> int:
    return 3 * (kernel_size ** 2 - 1)


@dataclass
class FeatureVector:
    kernel_size: int
    values: np.ndarray
    label: str
    source: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = feature_dim(self.kernel_size)
        if self.values.shape != (expected,):
            raise ValueError(f"feature length must be {expected}, "
                             f"got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature contains non-finite values")


@dataclass
class FeatureSet:
    kernel_size: int
    records: list[FeatureVector] = field(default_factory=list)

    def __post_init__(self):
        for rec in self.records:
            if rec.kernel_size != self.kernel_size:
                raise MixedKernelSizesError(
                    f"record kernel size {rec.kernel_size} != set {self.kernel_size}")

    @property
    def class_names(self) -> list[str]:
        seen = []
        for rec in self.records:
            if rec.label not in seen:
                seen.append(rec.label)
        return seen

    def matrix(self) -> np.ndarray:
        if not self.records:
            return np.empty((0, feature_dim(self.kernel_size)))
        return np.stack([rec.values for rec in self.records])

    def labels(self) -> list[str]:
        return [rec.label for rec in self.records]

    def __len__(self):
        return len(self.records)


def assemble(estimates, label: str, source: str) -> FeatureVector:
    """Concatenate R, G, B kernel weights into one feature vector."""
    estimates = tuple(estimates)
    if len(estimates) != 3:
        raise ValueError("need exactly three channel estimates")
    sizes = {e.kernel_size for e in estimates}
    if len(sizes) != 1:
        raise MixedKernelSizesError(f"mixed kernel sizes: {sorted(sizes)}")
    values = np.concatenate([e.weights for e in estimates])
    return FeatureVector(kernel_size=estimates[0].kernel_size,
                         values=values, label=label, source=source)


def save_features(fs: FeatureSet, path: str | Path) -> None:
    """Write '# kernel_size=N' then a CSV with header label,source,f0..f{D-1}.

    Floats are written with repr so the round-trip is exact.
    """
    dim = feature_dim(fs.kernel_size)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# kernel_size={fs.kernel_size}\n")
        writer = csv.writer(fh)
        writer.writerow(["label", "source"] + [f"f{i}" for i in range(dim)])
        for rec in fs.records:
            writer.writerow([rec.label, rec.source] + [repr(float(v)) for v in rec.values])


def load_features(path: str | Path) -> FeatureSet:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# kernel_size="):
            raise KernelSizeMissingError(
                f"{path}: missing leading '# kernel_size=N' comment")
        try:
            kernel_size = int(first.split("=", 1)[1])
        except ValueError as exc:
            raise KernelSizeMissingError(f"{path}: unparseable kernel size") from exc
        dim = feature_dim(kernel_size)
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatchError(f"{path}: missing header row") from None
        expected_header = ["label", "source"] + [f"f{i}" for i in range(dim)]
        if header != expected_header:
            raise SchemaMismatchError(
                f"{path}: line 2: header does not match the feature schema "
                f"for kernel_size={kernel_size}")
        records = []
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != dim + 2:
                raise SchemaMismatchError(
                    f"{path}: line {lineno}: expected {dim + 2} fields, got {len(row)}")
            try:
                values = np.array([float(v) for v in row[2:]])
            except ValueError as exc:
                raise SchemaMismatchError(f"{path}: line {lineno}: {exc}") from exc
            records.append(FeatureVector(kernel_size=kernel_size, values=values,
                                         label=row[0], source=row[1]))
    return FeatureSet(kernel_size=kernel_size, records=records)


@dataclass
class Standardization:
    """Per-dimension means and stds learned from a training set."""

    means: np.ndarray
    stds: np.ndarray

    def apply(self, fs: FeatureSet) -> FeatureSet:
        records = [
            FeatureVector(kernel_size=rec.kernel_size,
                          values=(rec.values - self.means) / self.stds,
                          label=rec.label, source=rec.source)
            for rec in fs.records
        ]
        return FeatureSet(kernel_size=fs.kernel_size, records=records)


def standardize(fs: FeatureSet) -> tuple[FeatureSet, Standardization]:
    """Z-score per dimension; zero-variance dimensions pass through (std=1)."""
    if len(fs) < 2:
        raise TooFewRecordsError("standardization needs at least 2 records")
    X = fs.matrix()
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    constant = stds == 0.0
    stds = np.where(constant, 1.0, stds)
    means = np.where(constant, 0.0, means)
    stats = Standardization(means=means, stds=stds)
    return stats.apply(fs), stats
