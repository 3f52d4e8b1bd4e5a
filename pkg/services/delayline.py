"""
Delay line service: builds delay profiles and simulates the capture of a
propagating signal at the sampling clock edge.
Demonstrates: Factory functions, Vectorized simulation, Exception translation
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.stats import norm

from models import (
    DelayProfile, DelayLineModel, ProfileKind, ThermometerCode,
    COARSE_MODULUS, OPERATING_RANGE, SANITY_RANGE
)
from utils.validators import ValidationError
from .errors import DelayLineError

logger = logging.getLogger(__name__)

# tolerance for "starts before the clock edge" comparisons, in picoseconds
EDGE_EPS = 1e-9


def _stratified_lognormal(rng: np.random.Generator, count: int, median: float,
                          sigma: float) -> np.ndarray:
    """One log-normal draw per equal-probability stratum, shuffled"""
    if count == 0:
        return np.zeros(0)
    quantiles = (np.arange(count) + rng.random(count)) / count
    return rng.permutation(median * np.exp(sigma * norm.ppf(quantiles)))


def _place_outliers(rng: np.random.Generator, delays: np.ndarray, is_large: np.ndarray,
                    profile: DelayProfile) -> None:
    """Widen one large tap and collapse ``fast_taps`` small ones, away from the clock edge"""
    cold_nc = profile.cold_nc if profile.cold_nc is not None else profile.target_nc
    reach = max(cold_nc - 1, 0)
    positions = np.arange(delays.size) < reach
    if profile.wide_tap_ps is not None:
        candidates = np.flatnonzero(positions & is_large)
        if candidates.size == 0:
            candidates = np.flatnonzero(positions)
        if candidates.size:
            delays[rng.choice(candidates)] = profile.wide_tap_ps
    candidates = np.flatnonzero(positions & ~is_large)
    count = min(profile.fast_taps, candidates.size)
    if count:
        delays[rng.choice(candidates, size=count, replace=False)] = profile.min_delay_ps


def _shape_boundary(delays: np.ndarray, profile: DelayProfile) -> np.ndarray:
    """
    Scale the taps around the clock edge so a line normalized at t_ref holds
    ``cold_nc`` bins at the cold end of the operating range and ``hot_nc`` at
    the hot end. Exact for a uniform gradient.
    """
    coeff = profile.temp_coeff
    if coeff <= 0:
        return delays
    tau = profile.coarse_period
    n = profile.target_nc
    low, high = OPERATING_RANGE

    if profile.cold_nc is not None and profile.cold_nc < n:
        # the last m bins drop out once the line has stretched by more than their sum
        m = n - profile.cold_nc
        stretch = tau * (1.0 - 1.0 / (1.0 + coeff * (profile.t_ref - low)))
        before = delays[n - m - 1]
        edge = stretch - min(before, stretch) / 2.0
        delays[n - m:n] *= edge / delays[n - m:n].sum()
        delays[:n - m] *= (tau - edge) / delays[:n - m].sum()

    if profile.hot_nc is not None:
        # taps past the edge join once the line has shrunk by more than their offset
        h = profile.hot_nc - n
        shrink = tau * (1.0 / (1.0 + coeff * (profile.t_ref - high)) - 1.0)
        offsets = np.cumsum(delays[n:])
        inside = offsets[h - 2] if h >= 2 else 0.0
        delays[n:] *= 2.0 * shrink / (inside + offsets[h - 1])
    return delays


def make_delay_line(n_taps: Optional[int] = None, seed: Optional[int] = None,
                    profile: Optional[DelayProfile] = None) -> DelayLineModel:
    """
    Build a delay line from a profile. ``n_taps`` and ``seed`` override the
    profile values. Two-population lines are rescaled so the first
    ``target_nc`` non-zero taps span exactly one coarse period at t_ref.
    """
    profile = profile or DelayProfile()
    overrides = {}
    if n_taps is not None:
        overrides['n_taps'] = n_taps
    if seed is not None:
        overrides['seed'] = seed
    if overrides:
        data = profile.to_dict()
        data.update(overrides)
        try:
            profile = DelayProfile.from_dict(data)
        except ValidationError as exc:
            raise DelayLineError(str(exc)) from exc
    errors = profile.get_validation_errors()
    if errors:
        raise DelayLineError(f"Invalid delay profile: {'; '.join(errors)}")

    lead = profile.leading_zero_taps
    active = profile.n_taps - lead
    base = np.zeros(profile.n_taps)

    if profile.kind is ProfileKind.UNIFORM:
        base[lead:] = profile.uniform_delay_ps
    else:
        rng = np.random.default_rng(profile.seed)
        is_large = np.arange(active) % profile.taps_per_group == 0
        large = _stratified_lognormal(rng, int(is_large.sum()), profile.large_median_ps,
                                      profile.large_sigma)
        small = _stratified_lognormal(rng, int((~is_large).sum()), profile.small_median_ps,
                                      profile.small_sigma)
        delays = np.empty(active)
        delays[is_large] = large
        delays[~is_large] = small
        delays = np.clip(delays, profile.min_delay_ps, profile.max_delay_ps)
        _place_outliers(rng, delays, is_large, profile)
        covered = delays[:profile.target_nc].sum()
        if covered <= 0:
            raise DelayLineError("delay profile produced no propagation delay")
        delays *= profile.coarse_period / covered
        base[lead:] = _shape_boundary(delays, profile)

    try:
        model = DelayLineModel(base, t_ref=profile.t_ref, temp_coeff=profile.temp_coeff,
                               gradient=profile.gradient_array(),
                               coarse_period=profile.coarse_period)
    except ValidationError as exc:
        raise DelayLineError(str(exc)) from exc

    logger.debug("built %s delay line: %d taps, tau=%.3f ps", profile.kind.value,
                 model.n_taps, model.coarse_period)
    return model


def check_temperature(temperature: float) -> float:
    low, high = SANITY_RANGE
    if not low <= float(temperature) <= high:
        raise DelayLineError(f"temperature {temperature} C outside the [{low}, {high}] C range")
    return float(temperature)


def effective_delays(model: DelayLineModel, temperature: float) -> np.ndarray:
    """Per-tap delays at ``temperature`` (linear model around t_ref)"""
    return model.delays_at(check_temperature(temperature))


def tap_edges(model: DelayLineModel, temperature: float) -> np.ndarray:
    """Cumulative delay at the end of every tap"""
    return np.cumsum(effective_delays(model, temperature))


def active_bins(model: DelayLineModel, temperature: float) -> int:
    """N_c: non-zero taps whose propagation starts within one coarse period"""
    delays = effective_delays(model, temperature)
    lead = model.leading_zero_taps
    starts = np.concatenate(([0.0], np.cumsum(delays)[:-1]))[lead:]
    return int(np.count_nonzero(starts < model.coarse_period - EDGE_EPS))


def true_bin_widths(model: DelayLineModel, temperature: float) -> np.ndarray:
    """Exact widths of bins 1..N_c; the last bin is cut at the clock period"""
    delays = effective_delays(model, temperature)[model.leading_zero_taps:]
    n_c = active_bins(model, temperature)
    widths = delays[:n_c].copy()
    start_last = widths[:-1].sum()
    widths[-1] = min(widths[-1], model.coarse_period - start_last)
    return widths


def propagate(model: DelayLineModel, arrival_times, temperature: float
              ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized capture: returns the unwrapped capturing edge index
    floor(t / tau) + 1 and the number of taps the signal fully crossed
    before that edge.
    """
    times = np.asarray(arrival_times, dtype=float)
    if times.size and times.min() < 0:
        raise DelayLineError("arrival times must be non-negative")
    tau = model.coarse_period
    coarse = np.floor(times / tau).astype(np.int64) + 1
    remaining = coarse * tau - times
    ones = np.searchsorted(tap_edges(model, temperature), remaining, side='right')
    return coarse, ones


def sample(model: DelayLineModel, arrival_time: float, temperature: float
           ) -> Tuple[int, ThermometerCode]:
    """Coarse count (wrapped to 48 bits) and thermometer code for one arrival"""
    if arrival_time < 0:
        raise DelayLineError("arrival_time must be non-negative")
    tau = model.coarse_period
    edge = int(arrival_time // tau) + 1
    remaining = edge * tau - arrival_time
    ones = int(np.searchsorted(tap_edges(model, temperature), remaining, side='right'))
    return edge % COARSE_MODULUS, ThermometerCode.filled(ones, model.n_taps)


def thermometer_codes(ones, n_taps: int) -> np.ndarray:
    """Clean codes as a (len(ones), n_taps) uint8 matrix"""
    ones = np.asarray(ones, dtype=np.int64)
    return (np.arange(n_taps)[None, :] < ones[:, None]).astype(np.uint8)


def _swap_transition(bits: np.ndarray, last_one: int) -> None:
    bits[last_one], bits[last_one + 1] = bits[last_one + 1], bits[last_one]


def inject_bubbles(code: ThermometerCode, p_bubble: float,
                   rng: np.random.Generator) -> ThermometerCode:
    """With probability p_bubble swap the bits around the last 1->0 transition"""
    if not 0.0 <= p_bubble <= 1.0:
        raise DelayLineError("p_bubble must be a probability")
    if rng.random() >= p_bubble:
        return code
    bits = code.bits.copy()
    ones = np.flatnonzero(bits)
    if ones.size == 0 or ones[-1] + 1 >= bits.size:
        return code
    _swap_transition(bits, int(ones[-1]))
    return ThermometerCode(bits)


def inject_bubbles_many(codes: np.ndarray, p_bubble: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Row-wise inject_bubbles on a code matrix (returns a new matrix)"""
    if not 0.0 <= p_bubble <= 1.0:
        raise DelayLineError("p_bubble must be a probability")
    codes = np.array(codes, dtype=np.uint8, copy=True)
    rows, width = codes.shape
    hit = rng.random(rows) < p_bubble
    # index of the last 1 in each row, -1 for all-zero rows
    last_one = width - 1 - np.argmax(codes[:, ::-1], axis=1)
    last_one[codes.max(axis=1) == 0] = -1
    swap = hit & (last_one >= 0) & (last_one + 1 < width)
    idx = np.flatnonzero(swap)
    pos = last_one[idx]
    codes[idx, pos], codes[idx, pos + 1] = codes[idx, pos + 1], codes[idx, pos]
    return codes
