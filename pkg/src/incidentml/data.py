"""Core data containers: feature/label/count matrices, splits, and folds.

All containers are frozen dataclasses around read-only numpy arrays, so they
can be shared across workers without copying.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

# Incident categories, in the fixed order used for every label/output matrix.
DEFAULT_LABELS = (
    "Privacy Violation",
    "Data Breach",
    "Extortion/Fraud",
    "IT Error",
    "Other",
)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabelSet:
    """Ordered incident-category names; order is fixed across train/test."""

    names: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise InvalidInputError("label names must be unique")

    @property
    def q(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class FeatureMatrix:
    """m x d numeric matrix of entity-year features.

    ``row_keys`` carries opaque (company_id, year) identifiers so downstream
    reports can name entities; it is not consumed by any learner.
    """

    values: np.ndarray
    col_names: tuple[str, ...]
    row_keys: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidInputError("feature values must be 2-dimensional")
        if v.shape[1] != len(self.col_names):
            raise InvalidInputError("col_names length must match column count")
        if len(set(self.col_names)) != len(self.col_names):
            raise InvalidInputError("feature column names must be unique")
        if np.isnan(v).any():
            raise InvalidInputError("feature matrix contains NaN after imputation")
        if self.row_keys and len(self.row_keys) != v.shape[0]:
            raise InvalidInputError("row_keys length must match row count")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelMatrix:
    """m x q binary occurrence matrix over an ordered label set."""

    values: np.ndarray
    labels: LabelSet = field(default_factory=LabelSet)
    row_keys: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != self.labels.q:
            raise InvalidInputError("label matrix shape must be m x q")
        if not np.isin(v, (0, 1)).all():
            raise InvalidInputError("label matrix entries must be 0 or 1")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.labels.q


@dataclass(frozen=True)
class CountMatrix:
    """m x q nonnegative integer matrix of per-category incident counts."""

    values: np.ndarray
    outputs: LabelSet = field(default_factory=LabelSet)
    row_keys: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != self.outputs.q:
            raise InvalidInputError("count matrix shape must be m x q")
        if (v < 0).any():
            raise InvalidInputError("counts must be nonnegative")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.outputs.q


@dataclass(frozen=True)
class SplitIndex:
    """Disjoint train/test row indices covering all m rows."""

    train_rows: tuple[int, ...]
    test_rows: tuple[int, ...]
    seed: int

    def __post_init__(self):
        overlap = set(self.train_rows) & set(self.test_rows)
        if overlap:
            raise InvalidInputError("train and test rows overlap")


@dataclass(frozen=True)
class FoldPlan:
    """Partition of training rows into K cross-validation folds."""

    k: int
    assignments: dict[int, int]
    seed: int

    def fold_rows(self, fold: int) -> np.ndarray:
        return np.array(sorted(r for r, f in self.assignments.items() if f == fold))

    def train_rows(self, fold: int) -> np.ndarray:
        return np.array(sorted(r for r, f in self.assignments.items() if f != fold))


def derive_labels(counts: CountMatrix) -> LabelMatrix:
    """Binary occurrence indicators: y_ij = 1 iff the count z_ij >= 1."""
    return LabelMatrix(
        values=(counts.values >= 1).astype(np.int64),
        labels=counts.outputs,
        row_keys=counts.row_keys,
    )


def make_split(m: int, ratio: float, seed: int) -> SplitIndex:
    """Deterministic shuffled train/test split with round-half-up train size.

    The train side is clamped to [1, m-1] so neither side is empty.
    """
    if m < 2:
        raise InvalidInputError("need at least 2 rows to split")
    if not 0.0 < ratio < 1.0:
        raise InvalidInputError("split ratio must lie strictly between 0 and 1")
    n_train = int(math.floor(ratio * m + 0.5))
    n_train = min(max(n_train, 1), m - 1)
    perm = np.random.default_rng(seed).permutation(m)
    train = tuple(sorted(int(i) for i in perm[:n_train]))
    test = tuple(sorted(int(i) for i in perm[n_train:]))
    return SplitIndex(train_rows=train, test_rows=test, seed=seed)


def make_folds(train_rows, k: int, seed: int) -> FoldPlan:
    """Assign training rows to K folds whose sizes differ by at most one."""
    rows = [int(r) for r in train_rows]
    if k < 2:
        raise InvalidInputError("fold count must be at least 2")
    if k > len(rows):
        raise InvalidInputError("fold count exceeds number of training rows")
    perm = np.random.default_rng(seed).permutation(len(rows))
    base, extra = divmod(len(rows), k)
    assignments: dict[int, int] = {}
    pos = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        for i in perm[pos : pos + size]:
            assignments[rows[i]] = fold
        pos += size
    return FoldPlan(k=k, assignments=assignments, seed=seed)
