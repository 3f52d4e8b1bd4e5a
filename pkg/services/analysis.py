"""
Performance metrics: DNL/tDNL, truncated mean delay, FWHM jitter from a
Gaussian fit, pulse shape of folded arrivals and time-gated QBER.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import norm

from models import (
    CalibrationTable, GaussianFit, JitterReport, LinearityReport, PulseShapeReport,
    QberReport, DEFAULT_F_S
)
from .errors import AnalysisError

logger = logging.getLogger(__name__)

# mean resolution of the default line (132 bins per 412.5 MHz period)
DEFAULT_RESOLUTION_PS = 1e12 / DEFAULT_F_S / 132
SMEARED_R2 = 0.9

DEFAULT_BASIS_MAP: Dict[str, int] = {'H': 0, 'V': 1, 'D': 2, 'A': 3}
# detectors come in pairs, one pair per measurement basis
BASIS_NAMES = ('Z', 'X')


def _trimmed(counts: Sequence[int]) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0 or counts.sum() <= 0:
        raise AnalysisError("histogram is empty")
    return counts[:np.flatnonzero(counts)[-1] + 1]


def dnl(counts: Sequence[int]) -> np.ndarray:
    """DNL_i = (w_i - <w>) / <w> over bins 1..N_c"""
    w = _trimmed(counts)
    mean = w.mean()
    return (w - mean) / mean


def tdnl(table: CalibrationTable) -> np.ndarray:
    """Deviation of consecutive calibrated center spacings from tau_res"""
    return np.diff(table.centers) / table.tau_res - 1.0


def linearity(table: CalibrationTable) -> LinearityReport:
    return LinearityReport(dnl=dnl(table.counts), tdnl=tdnl(table))


def truncated_mean_delay(widths: Sequence[float], k: int = 120) -> float:
    """Mean of the first ``k`` bin widths"""
    widths = np.asarray(widths, dtype=float)
    if k < 1 or k > widths.size:
        raise AnalysisError(f"k={k} outside 1..{widths.size}")
    return float(widths[:k].sum() / k)


def _binned_gaussian(lower: np.ndarray, upper: np.ndarray):
    def model(_, area, mean, sigma):
        sigma = abs(sigma) + 1e-12
        return area * (norm.cdf((upper - mean) / sigma) - norm.cdf((lower - mean) / sigma))
    return model


def fit_histogram(edges: np.ndarray, counts: np.ndarray) -> Tuple[GaussianFit, float, float]:
    """
    Least-squares fit of a bin-integrated Gaussian to the non-empty bins.
    Returns the fit, the residual norm and R^2. Raises RuntimeError when the
    optimizer does not converge.
    """
    counts = np.asarray(counts, dtype=float)
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = float(np.min(np.diff(edges)))
    used = counts > 0
    lower, upper, observed = edges[:-1][used], edges[1:][used], counts[used]

    total = counts.sum()
    mean0 = float(np.sum(centers * counts) / total)
    sigma0 = float(np.sqrt(np.sum(counts * (centers - mean0) ** 2) / total))
    sigma0 = max(sigma0, width / 2)

    model = _binned_gaussian(lower, upper)
    params, _ = curve_fit(model, centers[used], observed, p0=[total, mean0, sigma0],
                          maxfev=10000)
    area, mean, sigma = float(params[0]), float(params[1]), abs(float(params[2]))

    residual = observed - model(None, area, mean, sigma)
    ss_res = float(np.sum(residual ** 2))
    ss_tot = float(np.sum((observed - observed.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    peak = area * width / (np.sqrt(2.0 * np.pi) * sigma) if sigma > 0 else area
    return GaussianFit(peak, mean, sigma), float(np.sqrt(ss_res)), r_squared


def _edges(values: np.ndarray, bin_width: float) -> np.ndarray:
    # one spare bin on each side; empty bins are ignored by the fit
    low = (np.floor(values.min() / bin_width) - 1) * bin_width
    n_bins = int(np.floor((values.max() - low) / bin_width)) + 2
    return low + bin_width * np.arange(n_bins + 1)


def fwhm_jitter(tags_a: Sequence[float], tags_b: Sequence[float],
                bin_width: Optional[float] = None) -> JitterReport:
    """Histogram of pairwise differences a - b with its Gaussian fit"""
    a = np.asarray(tags_a, dtype=float)
    b = np.asarray(tags_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise AnalysisError("jitter needs non-empty tag sequences")
    if a.size != b.size:
        raise AnalysisError(f"tag sequences differ in length ({a.size} vs {b.size})")
    bin_width = bin_width or DEFAULT_RESOLUTION_PS / 2
    diffs = a - b

    if np.ptp(diffs) < 1e-9:
        logger.warning("tag differences are constant; reporting zero FWHM")
        edges = np.array([diffs[0] - bin_width / 2, diffs[0] + bin_width / 2])
        return JitterReport(edges, np.array([diffs.size]),
                            GaussianFit(float(diffs.size), float(diffs[0]), 0.0),
                            fwhm=0.0, residual_norm=0.0, r_squared=1.0,
                            n_samples=int(diffs.size), degenerate=True)

    edges = _edges(diffs, bin_width)
    counts, edges = np.histogram(diffs, bins=edges)
    try:
        fit, residual_norm, r_squared = fit_histogram(edges, counts)
    except RuntimeError as exc:
        raise AnalysisError(f"Gaussian fit failed: {exc}") from exc
    return JitterReport(edges, counts, fit, fit.fwhm, residual_norm, r_squared,
                        n_samples=int(diffs.size))


def pulse_shape(tags: Sequence[float], period: float,
                bin_width: Optional[float] = None) -> PulseShapeReport:
    """
    Fold timestamps modulo ``period`` around their circular mean phase and fit
    the resulting pulse. A poor fit marks the pulse as smeared, which is what a
    wrong folding period produces.
    """
    tags = np.asarray(tags, dtype=float)
    if tags.size == 0:
        raise AnalysisError("pulse shape needs at least one timestamp")
    if not period > 0:
        raise AnalysisError("period must be positive")
    bin_width = bin_width or DEFAULT_RESOLUTION_PS / 2

    phase = np.mod(tags, period) / period * 2.0 * np.pi
    origin = float(np.mod(np.angle(np.mean(np.exp(1j * phase))), 2.0 * np.pi) / (2.0 * np.pi)
                   * period)
    folded = np.mod(tags - origin + period / 2.0, period) - period / 2.0

    if np.ptp(folded) < 1e-6 * period:
        edges = np.array([folded[0] - bin_width / 2, folded[0] + bin_width / 2])
        return PulseShapeReport(edges, np.array([tags.size]),
                                GaussianFit(float(tags.size), float(folded[0]), 0.0),
                                fwhm=0.0, r_squared=1.0, period=period, phase_origin=origin)

    edges = _edges(folded, bin_width)
    counts, edges = np.histogram(folded, bins=edges)
    try:
        fit, _, r_squared = fit_histogram(edges, counts)
    except RuntimeError:
        logger.warning("pulse fit did not converge; pulse flagged as smeared")
        return PulseShapeReport(edges, counts, GaussianFit(0.0, 0.0, 0.0), fwhm=float('nan'),
                                r_squared=0.0, period=period, phase_origin=origin,
                                smeared=True)
    smeared = r_squared < SMEARED_R2
    if smeared:
        logger.warning("folded pulse is smeared (R^2=%.3f); check the folding period", r_squared)
    return PulseShapeReport(edges, counts, fit, fit.fwhm, r_squared, period, origin, smeared)


def in_gate(times: np.ndarray, center: float, width: float, period: float) -> np.ndarray:
    """Events whose folded time lies within width/2 of ``center``"""
    offset = np.mod(np.asarray(times, dtype=float) - center + period / 2.0, period) - period / 2.0
    return np.abs(offset) <= width / 2.0


def basis_of(channel: int) -> str:
    """Basis measured by a detector channel: 0 and 1 form Z, 2 and 3 form X"""
    index = int(channel) // 2
    return BASIS_NAMES[index] if index < len(BASIS_NAMES) else f'B{index}'


def _basis_order(name: str) -> int:
    return BASIS_NAMES.index(name) if name in BASIS_NAMES else len(BASIS_NAMES) + int(name[1:])


def qber(times: Sequence[float], channels: Sequence[int], labels: Sequence[str],
         gate: Tuple[float, float], period: float,
         basis_map: Optional[Dict[str, int]] = None) -> QberReport:
    """
    Error rate among gated detections whose detector basis matches the sent
    state. ``basis_map`` sends each label to its detector channel (default
    H->0, V->1, D->2, A->3); a label belongs to the basis of its channel.
    Detections in the other basis are sifted out before counting.
    """
    basis_map = basis_map or DEFAULT_BASIS_MAP
    center, width = gate
    if not period > 0 or not 0 < width <= period:
        raise AnalysisError("gate width must lie in (0, period]")
    times = np.asarray(times, dtype=float)
    channels = np.asarray(channels, dtype=np.int64)
    labels = np.asarray(labels)
    if not times.size == channels.size == labels.size:
        raise AnalysisError("times, channels and labels must have the same length")

    channel_basis = {channel: basis_of(channel) for channel in basis_map.values()}
    label_basis = {label: channel_basis[channel] for label, channel in basis_map.items()}
    gated = in_gate(times, center, width, period)
    expected = np.array([basis_map.get(str(label), -1) for label in labels], dtype=np.int64)
    sent_basis = np.array([label_basis.get(str(label), '') for label in labels])
    seen_basis = np.array([channel_basis.get(int(c), '?') for c in channels])
    sifted = gated & (sent_basis == seen_basis)

    n_gated = int(np.count_nonzero(sifted))
    if n_gated == 0:
        raise AnalysisError("no detections inside the gate after sifting")
    wrong = sifted & (channels != expected)
    per_basis = {}
    for basis in dict.fromkeys(sorted(channel_basis.values(), key=_basis_order)):
        in_basis = sifted & (sent_basis == basis)
        if np.any(in_basis):
            per_basis[basis] = float(np.count_nonzero(wrong & in_basis) / np.count_nonzero(in_basis))
    errors = int(np.count_nonzero(wrong))
    return QberReport(qber=errors / n_gated, gated=n_gated, errors=errors,
                      sifted_out=int(np.count_nonzero(gated) - n_gated),
                      gate_center=float(center), gate_width=float(width), per_basis=per_basis)


def qber_gate_sweep(times: Sequence[float], channels: Sequence[int], labels: Sequence[str],
                    center: float, widths: Sequence[float], period: float,
                    basis_map: Optional[Dict[str, int]] = None) -> List[QberReport]:
    """QBER for each gate width around the same center"""
    return [qber(times, channels, labels, (center, width), period, basis_map)
            for width in sorted(widths)]
