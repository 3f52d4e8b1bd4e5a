"""
Calibration models: the code-density calibration table and the sliding-window
state behind steady calibration.
Demonstrates: Immutable snapshots, Lazy evaluation, Incremental data structures
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from utils.fenwick import FenwickTree
from utils.validators import ValidationError
from .base import BaseModel, Validatable, check_known_keys


MAX_FINE_BINS = 256


class SteadyStatus(Enum):
    """Health of a steady window after seeding"""
    OK = "ok"
    TRUNCATED = "truncated"      # seed histogram larger than the window, tail kept
    UNDERSIZED = "undersized"    # fewer window slots than populated bins


class CalibrationTable(BaseModel, Validatable):
    """
    Immutable code-density calibration table.

    Bins are numbered 1..n_c. ``cumulative`` and ``centers`` carry the bin-0
    origin (0 ps) at index 0, so ``centers[fine]`` is the offset of fine value
    ``fine`` and ``centers[0] == 0`` is the bare coarse edge. Centers use a
    constant half-last-bin offset:
        c_i = delta_{n_c}/2 + delta_i/2 + t_{i-1}
    which makes the mean consecutive center difference exactly tau/n_c.
    Empty interior bins have zero width and repeat the previous center.
    """

    def __init__(self, counts: Sequence[int], coarse_period: float,
                 cumulative_counts: Optional[Sequence[int]] = None):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0 or np.any(counts < 0) or counts.sum() == 0:
            raise ValidationError("calibration needs a non-empty, non-negative histogram")
        if not coarse_period > 0:
            raise ValidationError("coarse_period must be positive")

        populated = np.flatnonzero(counts)
        n_c = int(populated[-1]) + 1
        counts = counts[:n_c]
        if cumulative_counts is None:
            cumulative_counts = np.cumsum(counts)
        cumulative_counts = np.asarray(cumulative_counts, dtype=np.int64)[:n_c]

        tau = float(coarse_period)
        total = float(cumulative_counts[-1])
        widths = counts / total * tau
        cumulative = np.concatenate(([0.0], cumulative_counts / total * tau))
        centers = 0.5 * widths[-1] + 0.5 * widths + cumulative[:-1]

        empty = np.flatnonzero(counts == 0)
        for index in empty:
            centers[index] = centers[index - 1] if index > 0 else 0.0

        self._counts = counts
        self._coarse_period = tau
        self._widths = widths
        self._cumulative = cumulative
        self._centers = np.concatenate(([0.0], centers))
        self._empty_bins = (empty + 1).tolist()
        for array in (self._counts, self._widths, self._cumulative, self._centers):
            array.flags.writeable = False

    @property
    def counts(self) -> np.ndarray:
        """w_i for bins 1..n_c"""
        return self._counts

    @property
    def n_c(self) -> int:
        return int(self._counts.size)

    @property
    def coarse_period(self) -> float:
        return self._coarse_period

    @property
    def bin_widths(self) -> np.ndarray:
        """delta t_i for bins 1..n_c (picoseconds)"""
        return self._widths

    @property
    def cumulative(self) -> np.ndarray:
        """t_0..t_{n_c} (picoseconds)"""
        return self._cumulative

    @property
    def centers(self) -> np.ndarray:
        """c_0..c_{n_c} (picoseconds)"""
        return self._centers

    @property
    def tau_res(self) -> float:
        return self._coarse_period / self.n_c

    @property
    def total_events(self) -> int:
        return int(self._counts.sum())

    @property
    def empty_bins(self) -> List[int]:
        """Interior bins that received no events"""
        return list(self._empty_bins)

    def get_validation_errors(self) -> List[str]:
        errors = []
        if not np.isclose(self._widths.sum(), self._coarse_period, rtol=1e-12):
            errors.append("bin widths do not sum to the coarse period")
        if np.any(np.diff(self._cumulative) < 0):
            errors.append("cumulative times decrease")
        return errors

    def csv_rows(self) -> List[List[Any]]:
        """Rows of (bin, count, width_ps, cumulative_ps, center_ps)"""
        return [[i + 1, int(self._counts[i]), float(self._widths[i]),
                 float(self._cumulative[i + 1]), float(self._centers[i + 1])]
                for i in range(self.n_c)]

    CSV_HEADERS = ['bin', 'count', 'width_ps', 'cumulative_ps', 'center_ps']

    def to_dict(self) -> Dict[str, Any]:
        return {
            'counts': self._counts.tolist(),
            'coarse_period': self._coarse_period,
            'n_c': self.n_c,
            'tau_res': self.tau_res,
            'bin_widths': self._widths.tolist(),
            'cumulative': self._cumulative.tolist(),
            'centers': self._centers.tolist(),
            'empty_bins': self.empty_bins,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CalibrationTable':
        """Derived fields are recomputed from the counts"""
        check_known_keys(data, ('counts', 'coarse_period', 'n_c', 'tau_res', 'bin_widths',
                                'cumulative', 'centers', 'empty_bins'), "calibration table")
        return cls(data['counts'], data['coarse_period'])

    def __repr__(self) -> str:
        return (f"CalibrationTable(n_c={self.n_c}, tau_res={self.tau_res:.3f} ps, "
                f"events={self.total_events})")


class SteadyState:
    """
    Sliding window of the most recent fine bin indices.

    The window lives in a fixed numpy ring buffer; the histogram and a Fenwick
    tree over it are updated on every push, so eviction plus insertion costs
    O(log max_bins). Tables are materialized lazily and cached until the next push.
    Single writer per instance.
    """

    def __init__(self, capacity: int, coarse_period: float, max_bins: int = MAX_FINE_BINS):
        if capacity < 1:
            raise ValidationError("window capacity must be at least 1")
        if not coarse_period > 0:
            raise ValidationError("coarse_period must be positive")
        self.capacity = int(capacity)
        self.coarse_period = float(coarse_period)
        self.max_bins = int(max_bins)
        self.status = SteadyStatus.OK
        self._ring = np.zeros(self.capacity, dtype=np.int32)
        self._head = 0
        self._size = 0
        self._counts = np.zeros(self.max_bins, dtype=np.int64)
        self._tree = FenwickTree(self.max_bins)
        self._table: Optional[CalibrationTable] = None
        self.pushes = 0

    @property
    def size(self) -> int:
        return self._size

    @property
    def is_full(self) -> bool:
        return self._size == self.capacity

    @property
    def window(self) -> np.ndarray:
        """Window contents, oldest first"""
        order = (self._head + np.arange(self._size)) % self.capacity
        return self._ring[order].copy()

    @property
    def counts(self) -> np.ndarray:
        """Live histogram trimmed to the last populated bin"""
        populated = np.flatnonzero(self._counts)
        if populated.size == 0:
            return np.zeros(0, dtype=np.int64)
        return self._counts[:populated[-1] + 1].copy()

    @property
    def tree(self) -> FenwickTree:
        return self._tree

    def _check_bins(self, fines: np.ndarray) -> None:
        if fines.size and (fines.min() < 1 or fines.max() > self.max_bins):
            raise ValidationError(f"fine bin indices must lie in 1..{self.max_bins}")

    def push(self, fine: int) -> Optional[int]:
        """Append one bin index; returns the evicted index once the window is full"""
        fine = int(fine)
        self._check_bins(np.array([fine]))
        evicted = None
        if self.is_full:
            evicted = int(self._ring[self._head])
            self._ring[self._head] = fine
            self._head = (self._head + 1) % self.capacity
            self._counts[evicted - 1] -= 1
            self._tree.add(evicted, -1)
        else:
            self._ring[(self._head + self._size) % self.capacity] = fine
            self._size += 1
        self._counts[fine - 1] += 1
        self._tree.add(fine, 1)
        self._table = None
        self.pushes += 1
        return evicted

    def push_many(self, fines: Sequence[int]) -> int:
        """Vectorized equivalent of pushing each index in order; returns evictions"""
        fines = np.asarray(fines, dtype=np.int64).ravel()
        self._check_bins(fines)
        if fines.size == 0:
            return 0
        n_evict = max(0, self._size + fines.size - self.capacity)
        old_counts = self._counts.copy()

        if fines.size >= self.capacity:
            self._ring[:] = fines[-self.capacity:]
            self._head = 0
            self._size = self.capacity
            self._counts = np.bincount(self._ring - 1, minlength=self.max_bins).astype(np.int64)
        else:
            evict_from_window = min(n_evict, self._size)
            evicted = self._ring[(self._head + np.arange(evict_from_window)) % self.capacity]
            positions = (self._head + self._size + np.arange(fines.size)) % self.capacity
            self._ring[positions] = fines
            self._head = (self._head + evict_from_window) % self.capacity
            self._size = min(self.capacity, self._size + fines.size)
            self._counts += np.bincount(fines - 1, minlength=self.max_bins)
            self._counts -= np.bincount(evicted - 1, minlength=self.max_bins)

        for index in np.flatnonzero(self._counts != old_counts):
            self._tree.add(int(index) + 1, int(self._counts[index] - old_counts[index]))
        self._table = None
        self.pushes += int(fines.size)
        return n_evict

    def table(self) -> CalibrationTable:
        """Current table; cached until the window changes"""
        if self._table is None:
            if self._size == 0:
                raise ValidationError("steady window is empty")
            counts = self.counts
            cumulative = self._tree.prefix_sums(counts.size)
            self._table = CalibrationTable(counts, self.coarse_period, cumulative)
        return self._table

    def __repr__(self) -> str:
        return (f"SteadyState(capacity={self.capacity}, size={self._size}, "
                f"status={self.status.value})")
