"""
Calibration service: static code-density calibration, steady (sliding window)
calibration and histogram comparison.
Demonstrates: Service functions over immutable models, Stateful per-channel calibrator
"""

import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from models import (
    CalibrationTable, SteadyState, SteadyStatus, RawTag, TagBatch, DEFAULT_F_S, MAX_FINE_BINS
)
from utils.validators import ValidationError, validate
from .errors import CalibrationError

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 1 << 17
DEFAULT_BLOCK = 1024


def min_events(alpha: float, beta: float, n_c: int) -> int:
    """
    Events needed so every bin width is known to relative precision ``beta``
    with confidence 1 - alpha: ceil((z_{alpha/2} / beta)^2 * n_c).
    """
    checks = [
        validate(alpha, "alpha").number().custom(lambda a: 0 < a < 1, "alpha must lie in (0, 1)"),
        validate(beta, "beta").number().custom(lambda b: 0 < b <= 1, "beta must lie in (0, 1]"),
        validate(n_c, "n_c").integer().min_value(1),
    ]
    errors = [e for check in checks for e in check.get_errors()]
    if errors:
        raise CalibrationError("; ".join(errors))
    z = norm.isf(alpha / 2.0)
    # absorb round-off so exact products are not pushed to the next integer
    return int(math.ceil((z / beta) ** 2 * n_c - 1e-9))


def next_power_of_two(n: int) -> int:
    """Smallest power of two >= n"""
    if n < 1:
        raise CalibrationError("n must be positive")
    return 1 << (int(n) - 1).bit_length()


def build_table(counts: Sequence[int], coarse_period: float,
                cumulative_counts: Optional[Sequence[int]] = None) -> CalibrationTable:
    """Code-density table from a per-bin histogram (trailing empty bins are trimmed)"""
    counts = np.asarray(counts)
    if counts.size == 0 or not np.any(counts):
        raise CalibrationError("cannot calibrate from an empty histogram")
    if np.any(counts < 0) or not np.all(np.mod(counts, 1) == 0):
        raise CalibrationError("histogram counts must be non-negative integers")
    try:
        table = CalibrationTable(counts.astype(np.int64), coarse_period, cumulative_counts)
    except ValidationError as exc:
        raise CalibrationError(str(exc)) from exc
    if table.empty_bins:
        logger.warning("%d interior bins are empty: %s", len(table.empty_bins),
                       table.empty_bins[:10])
    return table


def calibrate_tag(table: CalibrationTable, tag: RawTag) -> float:
    """Timestamp (ps) = coarse * tau - center[fine]"""
    if tag.fine > table.n_c:
        raise CalibrationError(f"fine index {tag.fine} beyond table range 0..{table.n_c}")
    return tag.coarse * table.coarse_period - float(table.centers[tag.fine])


def calibrate_tags(table: CalibrationTable, tags: TagBatch,
                   clamp: bool = True) -> Tuple[np.ndarray, int]:
    """
    Vectorized calibrate_tag. With ``clamp`` fine values beyond the table use
    its last center; the number of clamped tags is returned alongside.
    """
    fine = tags.fine
    beyond = fine > table.n_c
    clamped = int(np.count_nonzero(beyond))
    if clamped:
        if not clamp:
            raise CalibrationError(f"{clamped} tags exceed the table range 0..{table.n_c}")
        fine = np.minimum(fine, table.n_c)
    if np.any(fine < 0):
        raise CalibrationError("fine indices must be non-negative")
    times = tags.coarse.astype(np.float64) * table.coarse_period - table.centers[fine]
    return times, clamped


def chi_square(hist_a: Sequence[int], hist_b: Sequence[int]) -> float:
    """Symmetric chi-square between two histograms after normalization"""
    a = np.asarray(hist_a, dtype=float)
    b = np.asarray(hist_b, dtype=float)
    if a.size == 0 or b.size == 0 or a.sum() <= 0 or b.sum() <= 0:
        raise CalibrationError("chi_square needs two non-empty histograms")
    length = max(a.size, b.size)
    p = np.pad(a, (0, length - a.size)) / a.sum()
    q = np.pad(b, (0, length - b.size)) / b.sum()
    both = (p + q) > 0
    return float(np.sum((p[both] - q[both]) ** 2 / (p[both] + q[both])))


def round_robin(counts: Sequence[int]) -> np.ndarray:
    """Expand a histogram into 1-based bin indices, cycling through the bins"""
    counts = np.asarray(counts, dtype=np.int64)
    bins = np.repeat(np.arange(1, counts.size + 1), counts)
    ranks = np.arange(bins.size) - np.repeat(np.cumsum(counts) - counts, counts)
    return bins[np.lexsort((bins, ranks))]


def apportion(counts: Sequence[int], total: int) -> np.ndarray:
    """Scale counts to sum to ``total`` (largest remainders get the leftover units)"""
    counts = np.asarray(counts, dtype=np.int64)
    exact = counts * (total / counts.sum())
    scaled = np.floor(exact).astype(np.int64)
    leftover = int(total - scaled.sum())
    if leftover:
        order = np.lexsort((np.arange(counts.size), -(exact - scaled)))
        scaled[order[:leftover]] += 1
    return scaled


def steady_init(static_counts: Sequence[int], capacity: int = DEFAULT_WINDOW,
                coarse_period: float = 1e12 / DEFAULT_F_S,
                max_bins: int = MAX_FINE_BINS) -> SteadyState:
    """
    Seed a steady window from a static histogram. The synthetic window is the
    round-robin expansion of the counts. A histogram larger than the window is
    first scaled down to ``capacity`` events with largest-remainder rounding.
    """
    counts = np.asarray(static_counts, dtype=np.int64)
    if counts.size == 0 or not np.any(counts):
        raise CalibrationError("steady calibration needs a non-empty seed histogram")
    if counts.size > max_bins:
        raise CalibrationError(f"seed histogram has more than {max_bins} bins")
    try:
        state = SteadyState(capacity, coarse_period, max_bins)
    except ValidationError as exc:
        raise CalibrationError(str(exc)) from exc

    populated = int(np.count_nonzero(counts))
    if counts.sum() > capacity:
        counts = apportion(counts, capacity)
        state.status = SteadyStatus.TRUNCATED
    sequence = round_robin(counts)
    if capacity < populated:
        state.status = SteadyStatus.UNDERSIZED
        logger.warning("steady window of %d events is smaller than the %d populated bins",
                       capacity, populated)
    state.push_many(sequence)
    return state


def steady_push(state: SteadyState, fine: int) -> SteadyState:
    """Evict the oldest index (once full) and append ``fine``"""
    try:
        state.push(fine)
    except ValidationError as exc:
        raise CalibrationError(str(exc)) from exc
    return state


def steady_table(state: SteadyState) -> CalibrationTable:
    try:
        return state.table()
    except ValidationError as exc:
        raise CalibrationError(str(exc)) from exc


class SteadyCalibrator:
    """
    Per-channel steady calibration. Tags are calibrated in blocks with the
    table of the current window, then pushed, so each block sees the window
    as it stood before its own events arrived.
    """

    def __init__(self, state: SteadyState, block: int = DEFAULT_BLOCK):
        if block < 1:
            raise CalibrationError("block must be at least 1")
        self.state = state
        self.block = block
        self.clamped = 0

    @classmethod
    def from_counts(cls, static_counts: Sequence[int], capacity: int = DEFAULT_WINDOW,
                    coarse_period: float = 1e12 / DEFAULT_F_S,
                    block: int = DEFAULT_BLOCK) -> 'SteadyCalibrator':
        return cls(steady_init(static_counts, capacity, coarse_period), block)

    @property
    def table(self) -> CalibrationTable:
        return steady_table(self.state)

    def push(self, fine: int) -> None:
        steady_push(self.state, fine)

    def push_many(self, fines: Sequence[int]) -> None:
        try:
            self.state.push_many(fines)
        except ValidationError as exc:
            raise CalibrationError(str(exc)) from exc

    def calibrate(self, tags: TagBatch) -> np.ndarray:
        """Calibrate then absorb ``tags`` block by block"""
        times = np.empty(len(tags))
        clamped = 0
        for start in range(0, len(tags), self.block):
            block = tags.slice(start, start + self.block)
            times[start:start + len(block)], n = calibrate_tags(self.table, block)
            clamped += n
            self.push_many(block.fine)
        if clamped:
            logger.warning("%d tags exceeded the steady table range and were clamped", clamped)
        self.clamped += clamped
        logger.debug("steady window absorbed %d tags (n_c=%d)", len(tags), self.table.n_c)
        return times
