"""
Report value objects produced by the analysis service.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np


FWHM_FACTOR = 2.0 * np.sqrt(2.0 * np.log(2.0))


def _listify(values) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float)]


@dataclass(frozen=True)
class GaussianFit:
    """Fitted area-scaled Gaussian; amplitude is the expected count at the peak bin"""
    amplitude: float
    mean: float
    sigma: float

    @property
    def fwhm(self) -> float:
        return FWHM_FACTOR * abs(self.sigma)

    def to_dict(self) -> Dict[str, float]:
        return {'amplitude': self.amplitude, 'mean': self.mean, 'sigma': self.sigma}


@dataclass
class JitterReport:
    """Histogram of pairwise tag differences and its Gaussian fit"""
    edges: np.ndarray
    counts: np.ndarray
    fit: GaussianFit
    fwhm: float
    residual_norm: float
    r_squared: float
    n_samples: int
    degenerate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'edges_ps': _listify(self.edges),
            'counts': [int(c) for c in self.counts],
            'gaussian_fit': self.fit.to_dict(),
            'fwhm_ps': self.fwhm,
            'residual_norm': self.residual_norm,
            'r_squared': self.r_squared,
            'n_samples': self.n_samples,
            'degenerate': self.degenerate,
        }


@dataclass
class PulseShapeReport:
    """Folded arrival-time histogram of a pulsed source"""
    edges: np.ndarray
    counts: np.ndarray
    fit: GaussianFit
    fwhm: float
    r_squared: float
    period: float
    phase_origin: float
    smeared: bool = False

    @property
    def occupied_bins(self) -> int:
        return int(np.count_nonzero(self.counts))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'edges_ps': _listify(self.edges),
            'counts': [int(c) for c in self.counts],
            'gaussian_fit': self.fit.to_dict(),
            'fwhm_ps': self.fwhm,
            'r_squared': self.r_squared,
            'period_ps': self.period,
            'phase_origin_ps': self.phase_origin,
            'smeared': self.smeared,
        }


@dataclass
class LinearityReport:
    """DNL of the raw bins and tDNL of the calibrated centers"""
    dnl: np.ndarray
    tdnl: np.ndarray

    @property
    def dnl_range(self) -> Tuple[float, float]:
        return float(self.dnl.min()), float(self.dnl.max())

    @property
    def tdnl_range(self) -> Tuple[float, float]:
        return float(self.tdnl.min()), float(self.tdnl.max())

    @property
    def bins_above_one(self) -> int:
        return int(np.count_nonzero(self.dnl > 1.0))

    def csv_rows(self) -> List[List[Any]]:
        return [[i + 1, float(d), float(t)] for i, (d, t) in enumerate(zip(self.dnl, self.tdnl))]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dnl': _listify(self.dnl),
            'tdnl': _listify(self.tdnl),
            'dnl_range': list(self.dnl_range),
            'tdnl_range': list(self.tdnl_range),
            'bins_above_one': self.bins_above_one,
        }


@dataclass
class QberReport:
    """Time-gated error rate after basis sifting"""
    qber: float
    gated: int
    errors: int
    sifted_out: int
    gate_center: float
    gate_width: float
    per_basis: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'qber': self.qber,
            'gated': self.gated,
            'errors': self.errors,
            'sifted_out': self.sifted_out,
            'gate_center_ps': self.gate_center,
            'gate_width_ps': self.gate_width,
            'per_basis': dict(self.per_basis),
        }
