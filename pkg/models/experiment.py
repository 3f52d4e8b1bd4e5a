"""
Experiment settings: everything a CLI run needs, loaded from one JSON document.
Demonstrates: Composition of models, Defaults in model classes, Configuration validation
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from utils.validators import ValidationError, validate
from .base import BaseModel, Validatable, check_known_keys
from .delay_line import DelayProfile
from .source import SourceConfig, SourceKind
from .stream import BufferModel, ServerConfig


class Strategy(Enum):
    """Calibration strategies compared over a temperature sweep"""
    FIXED_RO_5C = "fixed_ro_5C"      # RO table taken at the first temperature
    FIXED_SPD_5C = "fixed_spd_5C"    # laser/SPD table taken at the first temperature
    RO_PER_STEP = "ro_per_step"      # fresh RO table at every temperature
    STEADY = "steady"                # sliding window fed by the measured events


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


def _from_section(model_cls, data: Any, name: str):
    if isinstance(data, model_cls):
        return data
    if data is None:
        return model_cls()
    if not isinstance(data, dict):
        raise ValidationError(f"{name} must be an object")
    return model_cls.from_dict(data)


class TemperatureRange(BaseModel, Validatable):
    """Inclusive temperature grid in degrees Celsius"""

    FIELDS = ('start', 'stop', 'step', 'order')

    def __init__(self, start: float = 5.0, stop: float = 80.0, step: float = 1.0,
                 order: str = "ascending"):
        self.start = start
        self.stop = stop
        self.step = step
        self.order = order

    def values(self) -> List[float]:
        count = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        grid = [round(self.start + i * self.step, 10) for i in range(max(count, 1))]
        return grid if self.order == "ascending" else grid[::-1]

    def get_validation_errors(self) -> List[str]:
        errors: List[str] = []
        for check in (
            validate(self.start, "temperatures.start").number(),
            validate(self.stop, "temperatures.stop").number(),
            validate(self.step, "temperatures.step").number().positive(),
            validate(self.order, "temperatures.order").one_of(["ascending", "descending"]),
        ):
            errors.extend(check.get_errors())
        if not errors and self.stop < self.start:
            errors.append("temperatures.stop must not be below temperatures.start")
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {'start': self.start, 'stop': self.stop, 'step': self.step, 'order': self.order}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TemperatureRange':
        check_known_keys(data, cls.FIELDS, "temperatures")
        rng = cls(**data)
        rng.raise_if_invalid()
        return rng


class QkdSettings(BaseModel, Validatable):
    """Parameters of the time-gated QBER scenario"""

    FIELDS = ('routing_error', 'detections', 'gate_width_ps', 'gate_widths_ps',
              'background_rate', 'temperature')

    def __init__(self, routing_error: float = 0.022, detections: int = 200000,
                 gate_width_ps: float = 500.0,
                 gate_widths_ps: Sequence[float] = (250.0, 500.0, 1000.0, 2000.0, 5000.0, 20000.0),
                 background_rate: float = 0.0, temperature: float = 25.0):
        self.routing_error = routing_error
        self.detections = detections
        self.gate_width_ps = gate_width_ps
        self.gate_widths_ps = list(gate_widths_ps)
        self.background_rate = background_rate
        self.temperature = temperature

    def get_validation_errors(self) -> List[str]:
        errors: List[str] = []
        for check in (
            validate(self.routing_error, "qkd.routing_error").number().probability(),
            validate(self.detections, "qkd.detections").integer().min_value(1),
            validate(self.gate_width_ps, "qkd.gate_width_ps").number().positive(),
            validate(self.background_rate, "qkd.background_rate").number().min_value(0),
            validate(self.temperature, "qkd.temperature").number(),
            validate(self.gate_widths_ps, "qkd.gate_widths_ps")
                .custom(lambda ws: len(ws) > 0 and all(w > 0 for w in ws),
                        "qkd.gate_widths_ps must be a non-empty list of positive widths"),
        ):
            errors.extend(check.get_errors())
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.FIELDS}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'QkdSettings':
        check_known_keys(data, cls.FIELDS, "qkd")
        settings = cls(**data)
        settings.raise_if_invalid()
        return settings


class StreamSettings(BaseModel, Validatable):
    """Buffer simulation and loopback benchmark parameters"""

    FIELDS = ('buffer', 'server', 'duration_s', 'bench_records')

    def __init__(self, buffer: Optional[BufferModel] = None, server: Optional[ServerConfig] = None,
                 duration_s: float = 10.0, bench_records: int = 2_000_000):
        self.buffer = buffer or BufferModel()
        self.server = server or ServerConfig()
        self.duration_s = duration_s
        self.bench_records = bench_records

    def get_validation_errors(self) -> List[str]:
        errors = self.buffer.get_validation_errors() + self.server.get_validation_errors()
        errors.extend(validate(self.duration_s, "stream.duration_s").number().positive().get_errors())
        errors.extend(validate(self.bench_records, "stream.bench_records").integer()
                      .min_value(1).get_errors())
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {
            'buffer': self.buffer.to_dict(),
            'server': self.server.to_dict(),
            'duration_s': self.duration_s,
            'bench_records': self.bench_records,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StreamSettings':
        check_known_keys(data, cls.FIELDS, "stream")
        settings = cls(
            buffer=_from_section(BufferModel, data.get('buffer'), "stream.buffer"),
            server=_from_section(ServerConfig, data.get('server'), "stream.server"),
            duration_s=data.get('duration_s', 10.0),
            bench_records=data.get('bench_records', 2_000_000),
        )
        settings.raise_if_invalid()
        return settings


def default_sources() -> Dict[str, SourceConfig]:
    return {
        'ro': SourceConfig(SourceKind.RING_OSCILLATOR, seed=1),
        'spd': SourceConfig(SourceKind.LASER_SPD, seed=2),
        'qkd': SourceConfig(SourceKind.QKD_PATTERN, seed=3),
    }


class ExperimentSpec(BaseModel, Validatable):
    """
    One experiment run: delay profile, sources, temperature grid, strategies and
    output settings. ``channel_noise_ps`` of None means the per-channel noise is
    fitted so the 25 C jitter equals ``target_fwhm_ps``.
    """

    FIELDS = ('name', 'profile', 'sources', 'temperatures', 'strategies', 'events_per_step',
              'window', 'steady_block', 'channel_noise_ps', 'target_fwhm_ps', 'truncate_k',
              'qkd', 'stream', 'output_dir', 'seed', 'format')
    SOURCE_ROLES = ('ro', 'spd', 'qkd')

    def __init__(self, name: str = "default", profile: Optional[DelayProfile] = None,
                 sources: Optional[Dict[str, SourceConfig]] = None,
                 temperatures: Optional[TemperatureRange] = None,
                 strategies: Optional[Sequence[Strategy]] = None,
                 events_per_step: int = 1 << 17, window: int = 1 << 17,
                 steady_block: int = 1024, channel_noise_ps: Optional[float] = None,
                 target_fwhm_ps: float = 27.63, truncate_k: int = 120,
                 qkd: Optional[QkdSettings] = None, stream: Optional[StreamSettings] = None,
                 output_dir: str = "results", seed: int = 2024,
                 format: OutputFormat = OutputFormat.CSV):
        self.name = name
        self.profile = profile or DelayProfile()
        self.sources = {**default_sources(), **(sources or {})}
        self.temperatures = temperatures or TemperatureRange()
        self.strategies = [Strategy(s) for s in (strategies or list(Strategy))]
        self.events_per_step = events_per_step
        self.window = window
        self.steady_block = steady_block
        self.channel_noise_ps = channel_noise_ps
        self.target_fwhm_ps = target_fwhm_ps
        self.truncate_k = truncate_k
        self.qkd = qkd or QkdSettings()
        self.stream = stream or StreamSettings()
        self.output_dir = output_dir
        self.seed = seed
        self.format = OutputFormat(format)

    def get_validation_errors(self) -> List[str]:
        errors: List[str] = []
        for check in (
            validate(self.name, "name").required(),
            validate(self.events_per_step, "events_per_step").integer().min_value(1),
            validate(self.window, "window").integer().min_value(1),
            validate(self.steady_block, "steady_block").integer().min_value(1),
            validate(self.target_fwhm_ps, "target_fwhm_ps").number().positive(),
            validate(self.truncate_k, "truncate_k").integer().min_value(1),
            validate(self.seed, "seed").integer().min_value(0),
            validate(self.output_dir, "output_dir").required(),
        ):
            errors.extend(check.get_errors())
        if self.channel_noise_ps is not None:
            errors.extend(validate(self.channel_noise_ps, "channel_noise_ps").number()
                          .min_value(0).get_errors())
        if not self.strategies:
            errors.append("at least one strategy is required")
        if len(set(self.strategies)) != len(self.strategies):
            errors.append("strategies must not repeat")
        for role in self.SOURCE_ROLES:
            if role not in self.sources:
                errors.append(f"sources.{role} is missing")
        errors.extend(self.profile.get_validation_errors())
        errors.extend(self.temperatures.get_validation_errors())
        errors.extend(self.qkd.get_validation_errors())
        errors.extend(self.stream.get_validation_errors())
        for role, source in self.sources.items():
            errors.extend(f"sources.{role}: {e}" for e in source.get_validation_errors())
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'profile': self.profile.to_dict(),
            'sources': {role: source.to_dict() for role, source in sorted(self.sources.items())},
            'temperatures': self.temperatures.to_dict(),
            'strategies': [s.value for s in self.strategies],
            'events_per_step': self.events_per_step,
            'window': self.window,
            'steady_block': self.steady_block,
            'channel_noise_ps': self.channel_noise_ps,
            'target_fwhm_ps': self.target_fwhm_ps,
            'truncate_k': self.truncate_k,
            'qkd': self.qkd.to_dict(),
            'stream': self.stream.to_dict(),
            'output_dir': self.output_dir,
            'seed': self.seed,
            'format': self.format.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentSpec':
        check_known_keys(data, cls.FIELDS, "experiment")
        sources = data.get('sources') or {}
        if not isinstance(sources, dict):
            raise ValidationError("sources must be an object keyed by role")
        unknown_roles = sorted(set(sources) - set(cls.SOURCE_ROLES))
        if unknown_roles:
            raise ValidationError(f"Unknown source roles: {', '.join(unknown_roles)}")
        try:
            spec = cls(
                name=data.get('name', "default"),
                profile=_from_section(DelayProfile, data.get('profile'), "profile"),
                sources={role: _from_section(SourceConfig, cfg, f"sources.{role}")
                         for role, cfg in sources.items()},
                temperatures=_from_section(TemperatureRange, data.get('temperatures'),
                                           "temperatures"),
                strategies=data.get('strategies'),
                events_per_step=data.get('events_per_step', 1 << 17),
                window=data.get('window', 1 << 17),
                steady_block=data.get('steady_block', 1024),
                channel_noise_ps=data.get('channel_noise_ps'),
                target_fwhm_ps=data.get('target_fwhm_ps', 27.63),
                truncate_k=data.get('truncate_k', 120),
                qkd=_from_section(QkdSettings, data.get('qkd'), "qkd"),
                stream=_from_section(StreamSettings, data.get('stream'), "stream"),
                output_dir=data.get('output_dir', "results"),
                seed=data.get('seed', 2024),
                format=data.get('format', "csv"),
            )
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"Invalid experiment: {exc}") from exc
        spec.raise_if_invalid()
        return spec

    def __repr__(self) -> str:
        return (f"ExperimentSpec(name={self.name!r}, strategies={[s.value for s in self.strategies]}, "
                f"seed={self.seed})")
