"""
Delay line models: delay profile configuration, the simulated tapped delay line,
thermometer codes and raw tags.
Demonstrates: Encapsulation, Immutable value objects, Data Validation
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from utils.validators import ValidationError, validate
from .base import BaseModel, Validatable, check_known_keys


DEFAULT_F_S = 412.5e6
COARSE_BITS = 48
COARSE_MODULUS = 1 << COARSE_BITS
OPERATING_RANGE = (5.0, 80.0)
SANITY_RANGE = (-40.0, 120.0)

GradientSpec = Union[None, float, List[float], Dict[str, float]]


class ProfileKind(Enum):
    """Delay profile generators"""
    TWO_POPULATION = "two_population"
    UNIFORM = "uniform"


def _readonly(values: Sequence[float]) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.flags.writeable = False
    return array


class DelayProfile(BaseModel, Validatable):
    """
    Configuration for generating a delay line.
    Groups of ``taps_per_group`` taps hold one large tap followed by small ones,
    mirroring the slice boundaries of the FPGA carry chain. One large tap can be
    widened to ``wide_tap_ps`` and ``fast_taps`` small taps collapse to
    ``min_delay_ps``. ``cold_nc``/``hot_nc`` are the bin counts the line reaches
    at the ends of the operating range; ``channel_temp_skew`` is the relative
    drift difference of every further input channel.
    """

    FIELDS = (
        'kind', 'n_taps', 'seed', 'large_median_ps', 'large_sigma', 'small_median_ps',
        'small_sigma', 'min_delay_ps', 'max_delay_ps', 'taps_per_group', 'wide_tap_ps',
        'fast_taps', 'leading_zero_taps', 'target_nc', 'cold_nc', 'hot_nc',
        'uniform_delay_ps', 't_ref', 'temp_coeff', 'channel_temp_skew', 'gradient', 'f_s',
        'coarse_period_ps'
    )

    def __init__(self, kind: ProfileKind = ProfileKind.TWO_POPULATION, n_taps: int = 144,
                 seed: int = 7, large_median_ps: float = 38.5, large_sigma: float = 0.03,
                 small_median_ps: float = 15.5, small_sigma: float = 0.1,
                 min_delay_ps: float = 0.5, max_delay_ps: float = 68.0,
                 taps_per_group: int = 8, wide_tap_ps: Optional[float] = 58.0,
                 fast_taps: int = 3, leading_zero_taps: int = 0, target_nc: int = 132,
                 cold_nc: Optional[int] = 129, hot_nc: Optional[int] = 135,
                 uniform_delay_ps: float = 10.0, t_ref: float = 25.0,
                 temp_coeff: float = 6.2e-4, channel_temp_skew: float = 0.3,
                 gradient: GradientSpec = None,
                 f_s: float = DEFAULT_F_S, coarse_period_ps: Optional[float] = None):
        self.kind = ProfileKind(kind)
        self.n_taps = n_taps
        self.seed = seed
        self.large_median_ps = large_median_ps
        self.large_sigma = large_sigma
        self.small_median_ps = small_median_ps
        self.small_sigma = small_sigma
        self.min_delay_ps = min_delay_ps
        self.max_delay_ps = max_delay_ps
        self.taps_per_group = taps_per_group
        self.wide_tap_ps = wide_tap_ps
        self.fast_taps = fast_taps
        self.leading_zero_taps = leading_zero_taps
        self.target_nc = target_nc
        self.cold_nc = cold_nc
        self.hot_nc = hot_nc
        self.uniform_delay_ps = uniform_delay_ps
        self.t_ref = t_ref
        self.temp_coeff = temp_coeff
        self.channel_temp_skew = channel_temp_skew
        self.gradient = gradient
        self.f_s = f_s
        self.coarse_period_ps = coarse_period_ps

    @property
    def coarse_period(self) -> float:
        """Sampling clock period in picoseconds"""
        if self.coarse_period_ps is not None:
            return float(self.coarse_period_ps)
        return 1e12 / self.f_s

    @property
    def sampling_frequency(self) -> float:
        """f_s in Hz, derived from the period override when one is given"""
        if self.coarse_period_ps is not None:
            return 1e12 / float(self.coarse_period_ps)
        return float(self.f_s)

    def get_validation_errors(self) -> List[str]:
        errors: List[str] = []
        checks = [
            validate(self.n_taps, "n_taps").integer().min_value(4),
            validate(self.seed, "seed").integer().min_value(0),
            validate(self.large_median_ps, "large_median_ps").number().min_value(0),
            validate(self.small_median_ps, "small_median_ps").number().min_value(0),
            validate(self.large_sigma, "large_sigma").number().min_value(0),
            validate(self.small_sigma, "small_sigma").number().min_value(0),
            validate(self.min_delay_ps, "min_delay_ps").number().min_value(0),
            validate(self.max_delay_ps, "max_delay_ps").number().positive(),
            validate(self.taps_per_group, "taps_per_group").integer().min_value(1),
            validate(self.leading_zero_taps, "leading_zero_taps").integer().min_value(0),
            validate(self.target_nc, "target_nc").integer().min_value(1),
            validate(self.uniform_delay_ps, "uniform_delay_ps").number().positive(),
            validate(self.t_ref, "t_ref").number(),
            validate(self.temp_coeff, "temp_coeff").number(),
            validate(self.channel_temp_skew, "channel_temp_skew").number(),
            validate(self.fast_taps, "fast_taps").integer().min_value(0),
            validate(self.f_s, "f_s").number().positive(),
        ]
        if self.coarse_period_ps is not None:
            checks.append(validate(self.coarse_period_ps, "coarse_period_ps").number().positive())
        if self.wide_tap_ps is not None:
            checks.append(validate(self.wide_tap_ps, "wide_tap_ps").number().positive())
        for name in ('cold_nc', 'hot_nc'):
            if getattr(self, name) is not None:
                checks.append(validate(getattr(self, name), name).integer().min_value(1))
        for check in checks:
            errors.extend(check.get_errors())
        if errors:
            return errors

        if self.min_delay_ps > self.max_delay_ps:
            errors.append("min_delay_ps must not exceed max_delay_ps")
        if self.leading_zero_taps >= self.n_taps:
            errors.append("leading_zero_taps must leave at least one active tap")
        if self.kind is ProfileKind.TWO_POPULATION:
            # target_nc only drives the rescaling of generated lines
            if self.target_nc > self.n_taps:
                errors.append(f"target_nc ({self.target_nc}) exceeds n_taps ({self.n_taps})")
            elif self.leading_zero_taps + self.target_nc > self.n_taps:
                errors.append("leading_zero_taps + target_nc exceeds n_taps")
            if self.large_median_ps == 0 and self.small_median_ps == 0:
                errors.append("at least one population median must be positive")
            if self.cold_nc is not None and self.cold_nc > self.target_nc:
                errors.append(f"cold_nc ({self.cold_nc}) exceeds target_nc ({self.target_nc})")
            if self.hot_nc is not None and not (
                    self.target_nc < self.hot_nc <= self.n_taps - self.leading_zero_taps):
                errors.append(f"hot_nc ({self.hot_nc}) must lie above target_nc and within "
                              f"the active taps")
            if self.fast_taps > self.n_taps // 2:
                errors.append("fast_taps must not exceed half of the taps")
        errors.extend(self._gradient_errors())
        return errors

    def for_channel(self, channel: int) -> 'DelayProfile':
        """
        Profile of the carry chain behind input ``channel``: its own seed and a
        temperature coefficient skewed by ``channel_temp_skew`` per channel.
        Channel 0 is this profile.
        """
        if channel == 0:
            return self
        data = self.to_dict()
        data['seed'] = self.seed + channel
        data['temp_coeff'] = self.temp_coeff * (1.0 + self.channel_temp_skew * channel)
        return DelayProfile.from_dict(data)

    def _gradient_errors(self) -> List[str]:
        gradient = self.gradient
        if gradient is None or isinstance(gradient, (int, float)) and not isinstance(gradient, bool):
            return []
        if isinstance(gradient, dict):
            check_keys = set(gradient) - {"start", "stop"}
            if check_keys or not {"start", "stop"} <= set(gradient):
                return ["gradient ramp needs exactly the keys start and stop"]
            return []
        if isinstance(gradient, (list, tuple)):
            return validate(list(gradient), "gradient").length(self.n_taps).get_errors()
        return ["gradient must be null, a number, a list or a {start, stop} ramp"]

    def gradient_array(self) -> np.ndarray:
        """Per-tap multipliers on temp_coeff"""
        gradient = self.gradient
        if gradient is None:
            return np.ones(self.n_taps)
        if isinstance(gradient, dict):
            return np.linspace(float(gradient["start"]), float(gradient["stop"]), self.n_taps)
        if isinstance(gradient, (list, tuple)):
            return np.asarray(gradient, dtype=float)
        return np.full(self.n_taps, float(gradient))

    def to_dict(self) -> Dict[str, Any]:
        data = {name: getattr(self, name) for name in self.FIELDS}
        data['kind'] = self.kind.value
        if isinstance(self.gradient, tuple):
            data['gradient'] = list(self.gradient)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DelayProfile':
        check_known_keys(data, cls.FIELDS, "delay profile")
        try:
            profile = cls(**data)
        except ValueError as exc:
            raise ValidationError(f"Invalid delay profile: {exc}") from exc
        profile.raise_if_invalid()
        return profile


class DelayLineModel(BaseModel, Validatable):
    """
    Ground truth of the simulated hardware: per-tap delays at t_ref and the
    linear temperature model
        delta_k(T) = base_k * (1 + temp_coeff * gradient_k * (t_ref - T)).
    Instances are immutable; arrays are exposed read-only.
    """

    def __init__(self, base_delays: Sequence[float], t_ref: float = 25.0,
                 temp_coeff: float = 6.2e-4, gradient: Optional[Sequence[float]] = None,
                 f_s: float = DEFAULT_F_S, coarse_period: Optional[float] = None):
        self._base_delays = _readonly(base_delays)
        self._t_ref = float(t_ref)
        self._temp_coeff = float(temp_coeff)
        if gradient is None:
            gradient = np.ones(self._base_delays.size)
        self._gradient = _readonly(gradient)
        if coarse_period is None:
            coarse_period = 1e12 / f_s
        self._coarse_period = float(coarse_period)
        self._f_s = 1e12 / self._coarse_period
        self.raise_if_invalid()

    @property
    def base_delays(self) -> np.ndarray:
        return self._base_delays

    @property
    def n_taps(self) -> int:
        return int(self._base_delays.size)

    @property
    def t_ref(self) -> float:
        return self._t_ref

    @property
    def temp_coeff(self) -> float:
        return self._temp_coeff

    @property
    def gradient(self) -> np.ndarray:
        return self._gradient

    @property
    def coarse_period(self) -> float:
        """tau_coarse in picoseconds"""
        return self._coarse_period

    @property
    def f_s(self) -> float:
        return self._f_s

    @property
    def leading_zero_taps(self) -> int:
        """Taps before the first one with non-zero delay"""
        nonzero = np.flatnonzero(self._base_delays > 0)
        return int(nonzero[0]) if nonzero.size else self.n_taps

    def delays_at(self, temperature: float) -> np.ndarray:
        """Effective per-tap delays; no range check (see services.delayline)"""
        scale = 1.0 + self._temp_coeff * self._gradient * (self._t_ref - float(temperature))
        return self._base_delays * scale

    def get_validation_errors(self) -> List[str]:
        errors = validate(self._base_delays, "base_delays").non_negative_values().get_errors()
        if self.n_taps < 1:
            errors.append("base_delays must not be empty")
        elif not np.any(self._base_delays > 0):
            errors.append("at least one base delay must be positive")
        if self._gradient.size != self.n_taps:
            errors.append("gradient length must equal the number of taps")
        errors.extend(validate(self._coarse_period, "coarse_period").number().positive().get_errors())
        if errors:
            return errors

        # delays are linear in T, so the operating range endpoints bound every tap
        for temperature in OPERATING_RANGE:
            if np.any(self.delays_at(temperature) < 0):
                errors.append(f"effective delays become negative at {temperature} C")
        if errors:
            return errors
        for temperature in (self._t_ref, *OPERATING_RANGE):
            total = float(self.delays_at(temperature).sum())
            if total < self._coarse_period * (1 - 1e-12):
                errors.append(f"delay line covers {total:.3f} ps at {temperature:g} C, less than "
                              f"one coarse period ({self._coarse_period:.3f} ps)")
                break
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {
            'base_delays': self._base_delays.tolist(),
            't_ref': self._t_ref,
            'temp_coeff': self._temp_coeff,
            'gradient': self._gradient.tolist(),
            'coarse_period': self._coarse_period,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DelayLineModel':
        check_known_keys(data, ('base_delays', 't_ref', 'temp_coeff', 'gradient',
                                'coarse_period', 'f_s'), "delay line")
        if 'base_delays' not in data:
            raise ValidationError("delay line requires base_delays")
        return cls(**data)

    def __repr__(self) -> str:
        return (f"DelayLineModel(n_taps={self.n_taps}, coarse_period={self._coarse_period:.3f} ps, "
                f"t_ref={self._t_ref}, temp_coeff={self._temp_coeff})")


class ThermometerCode:
    """Bits captured from the delay line at a clock edge (ones then zeros when clean)"""

    def __init__(self, bits: Sequence[int]):
        array = np.asarray(bits, dtype=np.uint8)
        if array.ndim != 1 or np.any(array > 1):
            raise ValidationError("thermometer code must be a 1-D sequence of bits")
        array.flags.writeable = False
        self._bits = array

    @classmethod
    def from_string(cls, text: str) -> 'ThermometerCode':
        return cls([int(ch) for ch in text.strip()])

    @classmethod
    def filled(cls, ones: int, length: int) -> 'ThermometerCode':
        """A clean code with ``ones`` leading ones"""
        bits = np.zeros(length, dtype=np.uint8)
        bits[:ones] = 1
        return cls(bits)

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def is_monotone(self) -> bool:
        """True for a valid (bubble-free) thermometer code"""
        return bool(np.all(np.diff(self._bits.astype(np.int8)) <= 0))

    def __len__(self) -> int:
        return int(self._bits.size)

    def __str__(self) -> str:
        return "".join(str(int(b)) for b in self._bits)

    def __repr__(self) -> str:
        return f"ThermometerCode('{self}')"

    def __eq__(self, other) -> bool:
        return isinstance(other, ThermometerCode) and np.array_equal(self._bits, other._bits)

    def __hash__(self) -> int:
        return hash(self._bits.tobytes())


@dataclass(frozen=True)
class RawTag:
    """Uncalibrated tag: capturing clock edge, fine bin index and channel"""
    coarse: int
    fine: int
    channel: int = 0

    def __post_init__(self):
        if not 0 <= self.coarse < COARSE_MODULUS:
            raise ValidationError(f"coarse count {self.coarse} outside 48-bit range")
        if self.fine < 0:
            raise ValidationError("fine bin index must be non-negative")
        if self.channel < 0:
            raise ValidationError("channel must be non-negative")

    def to_dict(self) -> Dict[str, int]:
        return {'coarse': self.coarse, 'fine': self.fine, 'channel': self.channel}


class TagBatch:
    """Column-oriented raw tags of one channel (coarse wrapped to 48 bits)"""

    def __init__(self, coarse: Sequence[int], fine: Sequence[int], channel: int = 0):
        self.coarse = np.asarray(coarse, dtype=np.uint64)
        self.fine = np.asarray(fine, dtype=np.int64)
        self.channel = int(channel)
        if self.coarse.shape != self.fine.shape:
            raise ValidationError("coarse and fine columns must have the same length")

    def __len__(self) -> int:
        return int(self.fine.size)

    def __getitem__(self, index: int) -> RawTag:
        return RawTag(int(self.coarse[index]), int(self.fine[index]), self.channel)

    def slice(self, start: int, stop: int) -> 'TagBatch':
        return TagBatch(self.coarse[start:stop], self.fine[start:stop], self.channel)

    def to_tags(self) -> List[RawTag]:
        return [self[i] for i in range(len(self))]

    def __repr__(self) -> str:
        return f"TagBatch(channel={self.channel}, tags={len(self)})"
