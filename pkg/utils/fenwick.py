"""
Fenwick tree (binary indexed tree) over integer bin counts.
"""

from typing import List

import numpy as np


class FenwickTree:
    """Prefix sums over bins 1..size with O(log n) point updates and queries.

    Bins are addressed with 1-based indices, matching the TDC bin numbering,
    so ``prefix_sum(i)`` is the number of events recorded in bins 1..i.
    The tree is stored in a plain list; index 0 is unused.
    """

    def __init__(self, size: int) -> None:
        if size < 1:
            raise ValueError("size must be positive")
        self.size = size
        self.tree: List[int] = [0] * (size + 1)

    @classmethod
    def from_counts(cls, counts) -> 'FenwickTree':
        """Builds a tree in O(n) from per-bin counts (counts[0] is bin 1)."""
        counts = np.asarray(counts, dtype=np.int64)
        tree = cls(max(1, counts.size))
        data = [0] + [int(c) for c in counts] + [0] * (tree.size - counts.size)
        for i in range(1, tree.size + 1):
            parent = i + (i & -i)
            if parent <= tree.size:
                data[parent] += data[i]
        tree.tree = data
        return tree

    def add(self, index: int, amount: int = 1) -> None:
        """Adds ``amount`` events to bin ``index``."""
        if not 1 <= index <= self.size:
            raise IndexError(f"bin {index} outside 1..{self.size}")
        while index <= self.size:
            self.tree[index] += amount
            index += index & -index

    def prefix_sum(self, index: int) -> int:
        """Sum of bins 1..index (0 for index 0)."""
        if not 0 <= index <= self.size:
            raise IndexError(f"bin {index} outside 0..{self.size}")
        result = 0
        while index > 0:
            result += self.tree[index]
            index -= index & -index
        return result

    def prefix_sums(self, upto: int) -> np.ndarray:
        """Prefix sums for bins 1..upto as an int64 array."""
        return np.array([self.prefix_sum(i) for i in range(1, upto + 1)], dtype=np.int64)
