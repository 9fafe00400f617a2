import math

import numpy as np
import pytest

from incidentml.data import (
    DEFAULT_LABELS,
    CountMatrix,
    LabelSet,
    derive_labels,
    make_folds,
    make_split,
)
from incidentml.errors import InvalidInputError


def _counts(rows):
    return CountMatrix(values=np.array(rows), outputs=LabelSet())


def test_derive_labels_marks_presence():
    labels = derive_labels(_counts([[0, 2, 1, 0, 0]]))
    assert labels.values.tolist() == [[0, 1, 1, 0, 0]]


def test_derive_labels_zero_row():
    labels = derive_labels(_counts([[0, 0, 0, 0, 0]]))
    assert labels.values.tolist() == [[0, 0, 0, 0, 0]]


def test_derive_labels_large_counts():
    labels = derive_labels(_counts([[7, 0, 0, 0, 1]]))
    assert labels.values.tolist() == [[1, 0, 0, 0, 1]]


def test_derive_labels_idempotent_on_binary():
    counts = _counts([[3, 0, 1, 0, 2], [0, 0, 0, 4, 0]])
    once = derive_labels(counts)
    again = derive_labels(CountMatrix(values=once.values, outputs=counts.outputs))
    assert np.array_equal(once.values, again.values)


def test_default_label_set():
    ls = LabelSet()
    assert ls.names == DEFAULT_LABELS
    assert ls.q == 5
    assert math.factorial(ls.q) == 120


def test_make_split_sizes():
    split = make_split(10, 0.8, seed=1)
    assert len(split.train_rows) == 8
    assert len(split.test_rows) == 2


def test_make_split_paper_scale_rounding():
    # round-half-up of 0.8 * 39877 = 31901.6
    split = make_split(39877, 0.8, seed=3)
    assert len(split.train_rows) == 31902
    assert len(split.test_rows) == 7975


def test_make_split_deterministic():
    a = make_split(100, 0.8, seed=42)
    b = make_split(100, 0.8, seed=42)
    assert a.train_rows == b.train_rows
    assert a.test_rows == b.test_rows


def test_make_split_partition():
    split = make_split(37, 0.8, seed=0)
    merged = sorted(split.train_rows + split.test_rows)
    assert merged == list(range(37))


def test_make_split_rejects_tiny_input():
    with pytest.raises(InvalidInputError):
        make_split(1, 0.8, seed=0)


def test_make_split_never_empties_a_side():
    split = make_split(2, 0.8, seed=0)  # round(1.6) = 2 would empty the test side
    assert len(split.train_rows) == 1
    assert len(split.test_rows) == 1


def test_make_split_rejects_bad_ratio():
    with pytest.raises(InvalidInputError):
        make_split(10, 1.0, seed=0)


def test_make_folds_even():
    plan = make_folds(range(10), 5, seed=0)
    sizes = sorted(len(plan.fold_rows(f)) for f in range(5))
    assert sizes == [2, 2, 2, 2, 2]


def test_make_folds_remainder():
    plan = make_folds(range(11), 5, seed=0)
    sizes = sorted((len(plan.fold_rows(f)) for f in range(5)), reverse=True)
    assert sizes == [3, 2, 2, 2, 2]


def test_make_folds_rejects_single_fold():
    with pytest.raises(InvalidInputError):
        make_folds(range(10), 1, seed=0)


def test_make_folds_rejects_more_folds_than_rows():
    with pytest.raises(InvalidInputError):
        make_folds(range(3), 4, seed=0)


def test_make_folds_partition_and_determinism():
    rows = list(range(40, 77))
    a = make_folds(rows, 4, seed=9)
    b = make_folds(rows, 4, seed=9)
    assert a.assignments == b.assignments
    covered = sorted(r for f in range(4) for r in a.fold_rows(f))
    assert covered == rows


def test_count_matrix_rejects_negative():
    with pytest.raises(InvalidInputError):
        _counts([[0, -1, 0, 0, 0]])
