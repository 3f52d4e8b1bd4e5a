"""
Event sources driving the simulated TDC: ring oscillator, pulsed laser with a
single-photon detector, square wave and the QKD pattern source.
Demonstrates: Iterator state, Vectorized random generation, Warnings
"""

import logging
import warnings
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from models import SourceConfig, SourceKind, EventStream, COARSE_MODULUS
from .errors import SourceError, CommensurabilityWarning

logger = logging.getLogger(__name__)

MAX_DENOMINATOR = 10_000
RATIO_TOLERANCE = 1e-12
RIPPLE_LIMIT = 1e-3


def commensurability(cfg: SourceConfig) -> Tuple[Optional[int], float]:
    """
    Phase lattice of a periodic source against the sampling clock.
    Returns (q, ripple): the source phases mod tau take q values when
    f_s / f_source is a ratio with denominator q, and ``ripple`` is the
    residual non-uniformity left by the Gaussian jitter. (None, 0.0) when the
    clocks are incommensurate.
    """
    ratio = cfg.sampling_frequency / cfg.effective_frequency
    approx = Fraction(ratio).limit_denominator(MAX_DENOMINATOR)
    if abs(ratio - float(approx)) > RATIO_TOLERANCE * max(1.0, ratio):
        return None, 0.0
    q = approx.denominator
    tau = 1e12 / cfg.sampling_frequency
    ripple = float(np.exp(-2.0 * np.pi ** 2 * cfg.jitter_sigma ** 2 * q ** 2 / tau ** 2))
    return q, ripple


def check_commensurability(cfg: SourceConfig) -> bool:
    """Warn when the source phases are not uniform over the clock period"""
    q, ripple = commensurability(cfg)
    if q is not None and ripple > RIPPLE_LIMIT:
        message = (f"{cfg.kind.value} at {cfg.effective_frequency:.9g} Hz is commensurate with "
                   f"f_s={cfg.sampling_frequency:.9g} Hz (q={q}, ripple={ripple:.3g}); "
                   f"code-density histograms will not be uniform")
        logger.warning(message)
        warnings.warn(message, CommensurabilityWarning, stacklevel=3)
        return False
    return True


class EventSource:
    """
    Single-owner generator of arrival times. Successive ``next_events`` calls
    continue the same stream; the detector dead time and the background are
    applied across call boundaries.
    """

    def __init__(self, cfg: SourceConfig):
        errors = cfg.get_validation_errors()
        if errors:
            raise SourceError(f"Invalid source: {'; '.join(errors)}")
        self.cfg = cfg
        # square waves are not code-density sources
        self.uniform = cfg.kind is SourceKind.SQUARE_WAVE or check_commensurability(cfg)
        self._rng = np.random.default_rng(cfg.seed)
        self._pulse = 0
        self._covered_until = float(cfg.start_ps)
        self._last_kept = -np.inf
        self._pending = EventStream(np.zeros(0), self._labels_or_none(np.zeros(0, dtype=np.int64)),
                                    np.zeros(0, dtype=bool))
        self._horizon = COARSE_MODULUS * 1e12 / cfg.sampling_frequency

    @property
    def period(self) -> float:
        return self.cfg.period_ps

    def _labels_or_none(self, pulses: np.ndarray):
        if self.cfg.kind is not SourceKind.QKD_PATTERN:
            return None
        pattern = np.asarray(self.cfg.pattern, dtype='<U1')
        return pattern[(pulses - 1) % pattern.size]

    def _chunk(self, n_signal: int) -> EventStream:
        cfg = self.cfg
        gaps = self._rng.geometric(cfg.detection_prob, n_signal)
        pulses = self._pulse + np.cumsum(gaps)
        self._pulse = int(pulses[-1])
        times = cfg.start_ps + pulses * self.period
        if cfg.jitter_sigma > 0:
            times = times + self._rng.normal(0.0, cfg.jitter_sigma, n_signal)
        labels = self._labels_or_none(pulses)
        is_signal = np.ones(n_signal, dtype=bool)

        lo, hi = self._covered_until, float(cfg.start_ps + self._pulse * self.period)
        self._covered_until = hi
        if cfg.background_rate > 0 and hi > lo:
            n_bg = self._rng.poisson(cfg.background_rate * (hi - lo) * 1e-12)
            bg_times = self._rng.uniform(lo, hi, n_bg)
            slots = np.maximum(np.rint((bg_times - cfg.start_ps) / self.period), 1).astype(np.int64)
            times = np.concatenate((times, bg_times))
            is_signal = np.concatenate((is_signal, np.zeros(n_bg, dtype=bool)))
            if labels is not None:
                labels = np.concatenate((labels, self._labels_or_none(slots)))

        order = np.argsort(times, kind='stable')
        times = np.maximum(times[order], 0.0)
        stream = EventStream(times, None if labels is None else labels[order], is_signal[order])
        if cfg.dead_time_ps > 0:
            stream = stream.take(self._dead_time_mask(stream.times))
        return stream

    def _dead_time_mask(self, times: np.ndarray) -> np.ndarray:
        keep = np.zeros(times.size, dtype=bool)
        last = self._last_kept
        dead = self.cfg.dead_time_ps
        for i, t in enumerate(times):
            if t - last >= dead:
                keep[i] = True
                last = t
        self._last_kept = last
        return keep

    def next_events(self, count: int) -> EventStream:
        """The next ``count`` events of the stream, in increasing time order"""
        if count < 1:
            raise SourceError("count must be at least 1")
        parts = [self._pending]
        have = len(self._pending)
        while have < count:
            chunk = self._chunk(count - have)
            parts.append(chunk)
            have += len(chunk)
        times = np.concatenate([p.times for p in parts])
        is_signal = np.concatenate([p.is_signal for p in parts])
        labels = None
        if self.cfg.kind is SourceKind.QKD_PATTERN:
            labels = np.concatenate([p.labels for p in parts])
        merged = EventStream(times, labels, is_signal)
        self._pending = merged.take(slice(count, None))
        result = merged.take(slice(0, count))
        if result.times[-1] >= self._horizon:
            raise SourceError("arrival times exceed the 48-bit coarse counter horizon")
        return result

    def __repr__(self) -> str:
        return f"EventSource({self.cfg!r}, pulse={self._pulse})"


def next_events(cfg: SourceConfig, count: int) -> EventStream:
    """First ``count`` events of a fresh source"""
    return EventSource(cfg).next_events(count)


def split_two_channels(events, jitter_sigma_per_channel: float,
                       seed: Optional[int] = None) -> Tuple[EventStream, EventStream]:
    """
    Copy every event to channels 0 and 1 with independent Gaussian noise.
    Outputs stay index-aligned with the input (pairs are not re-sorted).
    """
    if jitter_sigma_per_channel < 0:
        raise SourceError("jitter_sigma_per_channel must be non-negative")
    if not isinstance(events, EventStream):
        events = EventStream(events)
    rng = np.random.default_rng(seed)
    streams = []
    for _ in range(2):
        times = events.times
        if jitter_sigma_per_channel > 0:
            times = np.maximum(times + rng.normal(0.0, jitter_sigma_per_channel, times.size), 0.0)
        streams.append(EventStream(times.copy(), events.labels, events.is_signal))
    return streams[0], streams[1]


def phase_uniformity(times, period: float) -> Tuple[float, float]:
    """Kolmogorov-Smirnov test of arrival phases mod ``period`` against U(0, 1)"""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise SourceError("no events to test")
    result = stats.kstest(np.mod(times, period) / period, 'uniform')
    return float(result.statistic), float(result.pvalue)


QKD_CHANNELS = {'H': 0, 'V': 1, 'D': 2, 'A': 3}
QKD_PARTNER_CHANNEL = {'H': 1, 'V': 0, 'D': 3, 'A': 2}


def route_qkd_detections(stream: EventStream, routing_error: float,
                         seed: Optional[int] = None) -> np.ndarray:
    """
    Detector channel (H0 V1 D2 A3) of every event of a labelled stream.
    The receiver picks its basis at random. In the matching basis a photon
    reaches its own detector except with probability ``routing_error``; in the
    other basis either detector of that basis fires. Background counts fire a
    random detector.
    """
    if stream.labels is None:
        raise SourceError("routing needs a labelled (qkd_pattern) stream")
    if not 0.0 <= routing_error <= 1.0:
        raise SourceError("routing_error must be a probability")
    rng = np.random.default_rng(seed)
    n = len(stream)
    labels = stream.labels
    measure_z = rng.random(n) < 0.5
    flip = rng.random(n) < routing_error
    either = np.where(measure_z, 0, 2) + (rng.random(n) < 0.5)

    own = np.zeros(n, dtype=np.int64)
    partner = np.zeros(n, dtype=np.int64)
    for label, channel in QKD_CHANNELS.items():
        own[labels == label] = channel
        partner[labels == label] = QKD_PARTNER_CHANNEL[label]
    sent_z = own < 2

    channels = np.where(sent_z == measure_z, np.where(flip, partner, own), either)
    background = ~stream.is_signal
    channels[background] = rng.integers(0, 4, int(background.sum()))
    return channels
