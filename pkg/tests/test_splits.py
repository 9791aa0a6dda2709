import numpy as np
import pytest
from hypothesis import given, strategies as st

from msfss.data import IGNORE_LABEL, binarize_mask, make_fold_splits, read_fold_config, remap_to_base
from msfss.data.splits import to_target, write_fold_config
from msfss.errors import NonDivisible


def test_twenty_classes_four_folds():
    splits = make_fold_splits(20, 4)
    assert splits[0].novel_classes == (1, 2, 3, 4, 5)
    assert all(len(s.novel_classes) == 5 and len(s.base_classes) == 15 for s in splits)


def test_twelve_classes_fold_two():
    assert make_fold_splits(12, 4)[2].novel_classes == (7, 8, 9)


def test_non_divisible():
    with pytest.raises(NonDivisible):
        make_fold_splits(10, 4)


@given(st.integers(1, 8), st.integers(1, 8))
def test_folds_partition_classes(per_fold, folds):
    splits = make_fold_splits(per_fold * folds, folds)
    novel = [c for s in splits for c in s.novel_classes]
    assert sorted(novel) == list(range(1, per_fold * folds + 1))
    for s in splits:
        assert not set(s.novel_classes) & set(s.base_classes)
        assert len(s.novel_classes) + len(s.base_classes) == per_fold * folds


def test_fold_config_round_trip(tmp_path):
    splits = make_fold_splits(12, 4)
    write_fold_config(splits, tmp_path / "folds.txt")
    assert read_fold_config(tmp_path / "folds.txt") == splits


def test_binarize_example():
    binary, ignore = binarize_mask(np.array([[3, 5], [5, 0]]), 5)
    np.testing.assert_array_equal(binary, [[0, 1], [1, 0]])
    assert not ignore.any()


def test_binarize_keeps_ignore():
    mask = np.array([[5, IGNORE_LABEL], [0, 5]], dtype=np.uint8)
    binary, ignore = binarize_mask(mask, 5)
    np.testing.assert_array_equal(binary, [[1, 0], [0, 1]])
    np.testing.assert_array_equal(ignore, [[False, True], [False, False]])
    np.testing.assert_array_equal(to_target(mask, 5), [[1, 255], [0, 1]])


def test_remap_to_base():
    split = make_fold_splits(12, 4)[0]  # novel 1..3
    mask = np.array([[0, 1, 4], [12, 255, 3]], dtype=np.uint8)
    np.testing.assert_array_equal(remap_to_base(mask, split), [[0, 0, 1], [9, 255, 0]])
