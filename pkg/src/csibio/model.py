"""Core domain types shared by every pipeline stage.

Conventions fixed here and relied on everywhere else:

* CSI values are stored as a single complex128 matrix of shape
  ``[K subcarriers, T time samples]``; amplitude and phase are always
  derived with ``np.abs`` / ``np.angle``, never stored separately.
* Subcarrier index 0 maps to the lowest center frequency; ``freqs`` is
  strictly increasing and has length K.
* All types are frozen after construction and safe to share across
  threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class Hand(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True)
class SubjectLabel:
    """Identity of one acquisition: who, which repeat, which hand."""

    subject_id: str
    sample_index: int = 0
    hand: Hand = Hand.UNSPECIFIED

    def __post_init__(self):
        if not self.subject_id:
            raise ValueError("subject_id must be non-empty")
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")


@dataclass(frozen=True)
class CsiMatrix:
    """Complex channel matrix H(f_k, t) with its frequency axis.

    ``values[k, t]`` is the channel response of subcarrier ``k`` at time
    sample ``t`` (linear amplitude, phase in radians). ``freqs[k]`` is
    the subcarrier center frequency in Hz.
    """

    values: np.ndarray
    freqs: np.ndarray
    sample_rate_hint: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        freqs = np.asarray(self.freqs, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "freqs", freqs)
        values.flags.writeable = False
        freqs.flags.writeable = False
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D [K, T], got shape {values.shape}")
        if freqs.ndim != 1 or freqs.shape[0] != values.shape[0]:
            raise ValueError("freqs length must equal the subcarrier count K")

    @property
    def n_subcarriers(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def amplitude(self) -> np.ndarray:
        return np.abs(self.values)

    def phase(self) -> np.ndarray:
        return np.angle(self.values)

    def with_values(self, values: np.ndarray) -> "CsiMatrix":
        return replace(self, values=values)


def validate_matrix(m: CsiMatrix, allow_nan: bool = False) -> list[str]:
    """Check every CsiMatrix invariant; return one descriptor per violation.

    Total function: never raises, an empty list means the matrix is valid.
    ``allow_nan`` relaxes the finiteness check for freshly ingested data
    that has not passed the cleaning stage yet.
    """
    violations: list[str] = []
    k, t = m.values.shape
    if k < 2:
        violations.append(f"too-few-subcarriers: K={k} < 2")
    if t < 2:
        violations.append(f"too-few-samples: T={t} < 2")
    diffs = np.diff(m.freqs)
    if np.any(diffs <= 0):
        bad = int(np.argmax(diffs <= 0))
        violations.append(f"non-increasing-freqs at index {bad}")
    if not np.all(np.isfinite(m.freqs)):
        bad = int(np.argmax(~np.isfinite(m.freqs)))
        violations.append(f"non-finite-freq at index {bad}")
    if not allow_nan:
        finite = np.isfinite(m.values.real) & np.isfinite(m.values.imag)
        if not finite.all():
            bad_k, bad_t = np.argwhere(~finite)[0]
            violations.append(f"non-finite-entry at ({int(bad_k)},{int(bad_t)})")
    return violations


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of labeled acquisitions."""

    records: tuple[tuple[CsiMatrix, SubjectLabel], ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def subject_ids(self) -> list[str]:
        """Distinct subject ids in first-appearance order."""
        seen: dict[str, None] = {}
        for _, label in self.records:
            seen.setdefault(label.subject_id, None)
        return list(seen)

    def counts_per_subject(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for _, label in self.records:
            counts[label.subject_id] = counts.get(label.subject_id, 0) + 1
        return counts

    def filter(self, keep) -> "Dataset":
        return Dataset(tuple(r for r in self.records if keep(r[1])))

    def digest(self) -> str:
        """SHA-256 over the canonical little-endian encoding of all records."""
        h = hashlib.sha256()
        for matrix, label in self.records:
            h.update(label.subject_id.encode())
            h.update(np.int64(label.sample_index).tobytes())
            h.update(label.hand.value.encode())
            h.update(np.ascontiguousarray(matrix.freqs, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(matrix.values, dtype="<c16").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class FeatureVector:
    """Named scalar descriptors for one window, with degeneracy flags."""

    names: tuple[str, ...]
    values: np.ndarray
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "flags", tuple(self.flags))
        values.flags.writeable = False
        if len(self.names) != values.shape[0]:
            raise ValueError("names and values must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        if not np.all(np.isfinite(values)):
            bad = self.names[int(np.argmax(~np.isfinite(values)))]
            raise ValueError(f"non-finite feature value: {bad}")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class FeatureMatrix:
    """Stacked feature vectors: rows are windows, columns are named features."""

    feature_names: tuple[str, ...]
    values: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "labels", tuple(self.labels))
        values.flags.writeable = False
        if values.ndim != 2 or values.shape[1] != len(self.feature_names):
            raise ValueError("values must be [n_windows, n_features]")
        if values.shape[0] != len(self.labels):
            raise ValueError("one label required per row")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def from_vectors(vectors: Sequence[FeatureVector], labels: Iterable[str]) -> "FeatureMatrix":
        if not vectors:
            raise ValueError("at least one feature vector required")
        names = vectors[0].names
        for v in vectors[1:]:
            if v.names != names:
                raise ValueError("all feature vectors must share one schema")
        return FeatureMatrix(names, np.vstack([v.values for v in vectors]), tuple(labels))

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(tuple(names), self.values[:, idx], self.labels)


PROBABILITY_ATOL = 1e-9


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-window one-vs-rest probabilities aligned with true labels."""

    class_ids: tuple[str, ...]
    rows: np.ndarray
    true_labels: tuple[str, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "class_ids", tuple(self.class_ids))
        object.__setattr__(self, "true_labels", tuple(self.true_labels))
        rows.flags.writeable = False
        if rows.ndim != 2 or rows.shape[1] != len(self.class_ids):
            raise ValueError("rows must be [n_windows, n_classes]")
        if rows.shape[0] != len(self.true_labels):
            raise ValueError("row count must equal label count")
        if rows.size:
            if rows.min() < -PROBABILITY_ATOL or rows.max() > 1 + PROBABILITY_ATOL:
                raise ValueError("probabilities must lie in [0, 1]")
            sums = rows.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > PROBABILITY_ATOL:
                raise ValueError("every probability row must sum to 1")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def column(self, class_id: str) -> np.ndarray:
        return self.rows[:, self.class_ids.index(class_id)]

    def predicted_labels(self) -> list[str]:
        return [self.class_ids[i] for i in np.argmax(self.rows, axis=1)]

    @staticmethod
    def concatenate(parts: Sequence["ScoreMatrix"]) -> "ScoreMatrix":
        if not parts:
            raise ValueError("nothing to concatenate")
        class_ids = parts[0].class_ids
        for p in parts[1:]:
            if p.class_ids != class_ids:
                raise ValueError("all parts must share one class-id order")
        rows = np.vstack([p.rows for p in parts])
        labels = tuple(l for p in parts for l in p.true_labels)
        return ScoreMatrix(class_ids, rows, labels)
