"""Tests for the Fenwick tree"""

import numpy as np
import pytest

from utils import FenwickTree


def test_prefix_sums_match_cumsum(rng):
    counts = rng.integers(0, 50, 37)
    tree = FenwickTree.from_counts(counts)
    np.testing.assert_array_equal(tree.prefix_sums(37), np.cumsum(counts))
    assert tree.prefix_sum(37) == counts.sum()


def test_incremental_updates_match_from_scratch(rng):
    size = 16
    tree = FenwickTree(size)
    counts = np.zeros(size, dtype=np.int64)
    for _ in range(500):
        index = int(rng.integers(1, size + 1))
        amount = int(rng.integers(-2, 4))
        tree.add(index, amount)
        counts[index - 1] += amount
        assert tree.tree == FenwickTree.from_counts(counts).tree


def test_prefix_sum_bounds():
    tree = FenwickTree.from_counts([1, 2, 3, 4, 5])
    assert tree.prefix_sum(0) == 0
    assert tree.prefix_sum(3) == 6
    with pytest.raises(IndexError):
        tree.prefix_sum(6)


def test_from_counts_pads_to_size():
    tree = FenwickTree.from_counts([])
    assert tree.size == 1
    assert tree.prefix_sum(1) == 0


@pytest.mark.parametrize("index", [0, 9])
def test_out_of_range_bins(index):
    tree = FenwickTree(8)
    with pytest.raises(IndexError):
        tree.add(index)


def test_size_must_be_positive():
    with pytest.raises(ValueError):
        FenwickTree(0)
