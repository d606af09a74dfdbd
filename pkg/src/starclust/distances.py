"""The three dissimilarity matrices: warming-rate gap, variation gap, sign mismatch.

All matrices are exactly symmetric with a zero diagonal. Hamming distances are
integer counts widened to float in the shared matrix type.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .panel import TemperaturePanel
from .trends import TrendFit, panel_differences, sign_sequence

METRICS = ("slope", "diff", "hamming")


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric nonnegative dissimilarities over an ordered label subset."""

    metric: str
    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
        k = len(self.labels)
        if values.shape != (k, k):
            raise ValidationError(f"distance matrix shape {values.shape} does not match {k} labels")
        if len(set(self.labels)) != k:
            raise ValidationError("distance labels must be unique")
        if not np.all(np.isfinite(values)):
            raise ValidationError("distance matrix contains non-finite entries")
        if np.any(values < 0):
            raise ValidationError("distance matrix contains negative entries")
        if np.any(np.diagonal(values) != 0.0):
            raise ValidationError("distance matrix diagonal must be exactly zero")
        if not np.array_equal(values, values.T):
            raise ValidationError("distance matrix must be exactly symmetric")
        values.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.labels)


def slope_distance(trends: Sequence[TrendFit], ids: Sequence[str]) -> DistanceMatrix:
    """Absolute slope gap |b_i - b_j| between estimated warming rates."""
    if len(trends) != len(ids):
        raise ValidationError("one trend fit per id is required")
    slopes = np.array([fit.slope for fit in trends], dtype=float)
    values = np.abs(slopes[:, None] - slopes[None, :])
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(metric="slope", labels=tuple(ids), values=values)


def diff_distance(panel: TemperaturePanel) -> DistanceMatrix:
    """Euclidean distance between the first-difference series of two countries."""
    diffs = panel_differences(panel)
    gaps = diffs[:, None, :] - diffs[None, :, :]
    values = np.sqrt(np.einsum("ijt,ijt->ij", gaps, gaps))
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(metric="diff", labels=panel.ids, values=values)


def hamming_distance(signs: Sequence[np.ndarray], ids: Sequence[str]) -> DistanceMatrix:
    """Number of differing positions between equal-length binary sign strings."""
    if len(signs) != len(ids):
        raise ValidationError("one sign string per id is required")
    lengths = {len(s) for s in signs}
    if len(lengths) > 1:
        raise ValidationError(f"sign strings have mixed lengths: {sorted(lengths)}")
    bits = np.asarray(signs, dtype=np.uint8)
    values = (bits[:, None, :] != bits[None, :, :]).sum(axis=2).astype(float)
    return DistanceMatrix(metric="hamming", labels=tuple(ids), values=values)


def sign_distance(panel: TemperaturePanel) -> DistanceMatrix:
    """Hamming distance over the panel's change-sign strings."""
    bits = sign_sequence(panel_differences(panel))
    return hamming_distance(list(bits), panel.ids)


def write_distance_csv(dist: DistanceMatrix, path: str | Path) -> None:
    """Square CSV with id header row and column."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + list(dist.labels))
        for label, row in zip(dist.labels, dist.values):
            writer.writerow([label] + [repr(float(v)) for v in row])
