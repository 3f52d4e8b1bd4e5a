"""
Event source models: configuration of arrival-time generators and the
generated event streams.
Demonstrates: Enum-driven defaults, Data Validation, Value objects
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from utils.validators import ValidationError, validate
from .base import BaseModel, Validatable, check_known_keys
from .delay_line import DEFAULT_F_S


GOLDEN_RATIO = (1 + 5 ** 0.5) / 2


class SourceKind(Enum):
    """Supported arrival-time generators"""
    RING_OSCILLATOR = "ring_oscillator"
    LASER_SPD = "laser_spd"
    SQUARE_WAVE = "square_wave"
    QKD_PATTERN = "qkd_pattern"


KIND_DEFAULTS: Dict[SourceKind, Dict[str, Any]] = {
    SourceKind.RING_OSCILLATOR: {
        'frequency': DEFAULT_F_S / GOLDEN_RATIO, 'jitter_sigma': 0.0,
        'detection_prob': 1 / 64, 'clock_offset_ppm': 0.0,
    },
    SourceKind.LASER_SPD: {
        'frequency': 50e6, 'jitter_sigma': 100.0,
        'detection_prob': 0.008, 'clock_offset_ppm': 25.0,
    },
    SourceKind.QKD_PATTERN: {
        'frequency': 50e6, 'jitter_sigma': 100.0,
        'detection_prob': 0.008, 'clock_offset_ppm': 25.0,
    },
    SourceKind.SQUARE_WAVE: {
        'frequency': 1e6, 'jitter_sigma': 0.0,
        'detection_prob': 1.0, 'clock_offset_ppm': 0.0,
    },
}


class SourceConfig(BaseModel, Validatable):
    """
    Configuration of one event source. Unset rate/jitter/probability fields take
    the defaults of the source kind.
    """

    FIELDS = ('kind', 'frequency', 'jitter_sigma', 'detection_prob', 'background_rate',
              'pattern', 'seed', 'clock_offset_ppm', 'dead_time_ps', 'sampling_frequency',
              'start_ps')

    def __init__(self, kind: SourceKind = SourceKind.RING_OSCILLATOR,
                 frequency: Optional[float] = None, jitter_sigma: Optional[float] = None,
                 detection_prob: Optional[float] = None, background_rate: float = 0.0,
                 pattern: Sequence[str] = ("H", "V", "D", "D"), seed: int = 0,
                 clock_offset_ppm: Optional[float] = None, dead_time_ps: float = 0.0,
                 sampling_frequency: float = DEFAULT_F_S, start_ps: float = 0.0):
        self.kind = SourceKind(kind)
        defaults = KIND_DEFAULTS[self.kind]
        self.frequency = defaults['frequency'] if frequency is None else frequency
        self.jitter_sigma = defaults['jitter_sigma'] if jitter_sigma is None else jitter_sigma
        self.detection_prob = defaults['detection_prob'] if detection_prob is None else detection_prob
        self.clock_offset_ppm = (defaults['clock_offset_ppm'] if clock_offset_ppm is None
                                 else clock_offset_ppm)
        self.background_rate = background_rate
        self.pattern = list(pattern)
        self.seed = seed
        self.dead_time_ps = dead_time_ps
        self.sampling_frequency = sampling_frequency
        self.start_ps = start_ps

    @property
    def effective_frequency(self) -> float:
        """Nominal frequency shifted by the free-running clock offset"""
        return self.frequency * (1.0 + self.clock_offset_ppm * 1e-6)

    @property
    def period_ps(self) -> float:
        return 1e12 / self.effective_frequency

    def with_overrides(self, **changes: Any) -> 'SourceConfig':
        """Copy with some fields replaced"""
        data = self.to_dict()
        data.update(changes)
        return SourceConfig.from_dict(data)

    def get_validation_errors(self) -> List[str]:
        errors: List[str] = []
        for check in (
            validate(self.frequency, "frequency").number().positive(),
            validate(self.jitter_sigma, "jitter_sigma").number().min_value(0),
            validate(self.detection_prob, "detection_prob").number().probability()
                .custom(lambda p: p > 0, "detection_prob must be positive"),
            validate(self.background_rate, "background_rate").number().min_value(0),
            validate(self.seed, "seed").integer().min_value(0),
            validate(self.clock_offset_ppm, "clock_offset_ppm").number()
                .min_value(-1e5).max_value(1e5),
            validate(self.dead_time_ps, "dead_time_ps").number().min_value(0),
            validate(self.sampling_frequency, "sampling_frequency").number().positive(),
            validate(self.start_ps, "start_ps").number().min_value(0),
        ):
            errors.extend(check.get_errors())
        if self.kind is SourceKind.QKD_PATTERN:
            if not self.pattern:
                errors.append("pattern must not be empty")
            elif any(symbol not in ("H", "V", "D", "A") for symbol in self.pattern):
                errors.append("pattern symbols must be H, V, D or A")
        return errors

    def to_dict(self) -> Dict[str, Any]:
        data = {name: getattr(self, name) for name in self.FIELDS}
        data['kind'] = self.kind.value
        data['pattern'] = list(self.pattern)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SourceConfig':
        check_known_keys(data, cls.FIELDS, "source")
        try:
            config = cls(**data)
        except ValueError as exc:
            raise ValidationError(f"Invalid source: {exc}") from exc
        config.raise_if_invalid()
        return config

    def __repr__(self) -> str:
        return (f"SourceConfig(kind={self.kind.value}, frequency={self.frequency:.6g} Hz, "
                f"seed={self.seed})")


class EventStream:
    """
    Ordered arrival times (ps) with optional pattern labels.
    ``is_signal`` separates source events from background counts; background
    events carry the label of the pattern slot they fall in.
    """

    def __init__(self, times: Sequence[float], labels: Optional[Sequence[str]] = None,
                 is_signal: Optional[Sequence[bool]] = None):
        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1:
            raise ValidationError("event times must be one-dimensional")
        self.labels = None if labels is None else np.asarray(labels, dtype='<U1')
        if is_signal is None:
            is_signal = np.ones(self.times.size, dtype=bool)
        self.is_signal = np.asarray(is_signal, dtype=bool)
        if self.labels is not None and self.labels.size != self.times.size:
            raise ValidationError("labels and times must have the same length")
        if self.is_signal.size != self.times.size:
            raise ValidationError("is_signal and times must have the same length")

    def __len__(self) -> int:
        return int(self.times.size)

    def take(self, mask_or_index) -> 'EventStream':
        """Sub-stream selected by a boolean mask or index array"""
        labels = None if self.labels is None else self.labels[mask_or_index]
        return EventStream(self.times[mask_or_index], labels, self.is_signal[mask_or_index])

    def csv_rows(self) -> List[List[Any]]:
        """Rows of (time_ps, label)"""
        labels = self.labels if self.labels is not None else [""] * len(self)
        return [[float(t), str(label)] for t, label in zip(self.times, labels)]

    def __repr__(self) -> str:
        return f"EventStream(events={len(self)}, signal={int(self.is_signal.sum())})"
