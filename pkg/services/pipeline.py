"""
TDC channel: delay line capture, optional code materialization with bubbles,
adder-tree decoding and fine bin assignment.
"""

import logging
from typing import Optional

import numpy as np

from models import DelayLineModel, TagBatch, COARSE_MODULUS
from . import delayline
from .decoder import decode_many
from .errors import DelayLineError

logger = logging.getLogger(__name__)


class TdcChannel:
    """
    One acquisition channel on a shared delay line.

    Fine bins are numbered from 1 at the first tap with non-zero delay:
    fine = ones - leading_zero_taps + 1, clamped to the bins active at the
    current temperature. Fine 0 is never produced by acquisition; it denotes
    the bare coarse edge in calibration.
    """

    def __init__(self, model: DelayLineModel, channel: int = 0, p_bubble: float = 0.0,
                 materialize_codes: bool = False, seed: Optional[int] = None):
        if not 0.0 <= p_bubble <= 1.0:
            raise DelayLineError("p_bubble must be a probability")
        self.model = model
        self.channel = channel
        self.p_bubble = p_bubble
        self.materialize_codes = materialize_codes or p_bubble > 0
        self._rng = np.random.default_rng(seed)

    def fine_bins(self, ones: np.ndarray, temperature: float) -> np.ndarray:
        n_active = delayline.active_bins(self.model, temperature)
        fine = np.asarray(ones, dtype=np.int64) - self.model.leading_zero_taps + 1
        return np.clip(fine, 1, n_active)

    def acquire(self, arrival_times, temperature: float) -> TagBatch:
        """Raw tags for an array of arrival times (ps)"""
        coarse, ones = delayline.propagate(self.model, arrival_times, temperature)
        if self.materialize_codes:
            codes = delayline.thermometer_codes(ones, self.model.n_taps)
            if self.p_bubble > 0:
                codes = delayline.inject_bubbles_many(codes, self.p_bubble, self._rng)
            ones = decode_many(codes, self.model.n_taps)
        wrapped = (coarse % COARSE_MODULUS).astype(np.uint64)
        return TagBatch(wrapped, self.fine_bins(ones, temperature), self.channel)

    def histogram(self, arrival_times, temperature: float) -> np.ndarray:
        """Code-density histogram (bins 1..N_c) of the fine values"""
        tags = self.acquire(arrival_times, temperature)
        return np.bincount(tags.fine - 1, minlength=delayline.active_bins(self.model, temperature))

    def __repr__(self) -> str:
        return f"TdcChannel(channel={self.channel}, p_bubble={self.p_bubble})"
