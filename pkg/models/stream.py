"""
Acquisition data path models: double-buffer memory, buffer simulation reports
and streaming server settings.
Demonstrates: Enum modes, Closed-form invariants, Data Validation
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from utils.validators import ValidationError, validate
from .base import BaseModel, Validatable, check_known_keys


class TransferMode(Enum):
    """How records leave the acquisition memory"""
    CONTINUOUS = "continuous"   # half/full interrupts push each half
    REQUEST = "request"         # the host pulls everything since its last request


class BufferModel(BaseModel, Validatable):
    """
    Double-buffer memory of ``capacity`` records filled at ``fill_rate``.
    ``drain_time_half`` is the time to extract capacity/2 records.
    """

    FIELDS = ('capacity', 'fill_rate', 'drain_time_half', 'mode', 'period')

    def __init__(self, capacity: int = 1 << 16, fill_rate: float = 12e6,
                 drain_time_half: float = 2e-3, mode: TransferMode = TransferMode.CONTINUOUS,
                 period: float = 0.05):
        self.capacity = capacity
        self.fill_rate = fill_rate
        self.drain_time_half = drain_time_half
        self.mode = TransferMode(mode)
        self.period = period

    @property
    def half(self) -> int:
        return self.capacity // 2

    @property
    def half_fill_time(self) -> float:
        """Seconds to fill one half"""
        return self.half / self.fill_rate

    @property
    def no_overflow(self) -> bool:
        """Continuous-mode condition: a half drains before the other one fills"""
        return self.drain_time_half < self.half_fill_time

    def predicted_first_overflow(self) -> Optional[float]:
        """Closed-form first overflow time in continuous mode (None when sustainable)"""
        if self.no_overflow:
            return None
        return self.capacity / self.fill_rate

    def get_validation_errors(self) -> List[str]:
        errors: List[str] = []
        for check in (
            validate(self.capacity, "capacity").integer().min_value(2)
                .custom(lambda c: isinstance(c, int) and c % 2 == 0, "capacity must be even"),
            validate(self.fill_rate, "fill_rate").number().positive(),
            validate(self.drain_time_half, "drain_time_half").number().positive(),
            validate(self.period, "period").number().positive(),
        ):
            errors.extend(check.get_errors())
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {
            'capacity': self.capacity,
            'fill_rate': self.fill_rate,
            'drain_time_half': self.drain_time_half,
            'mode': self.mode.value,
            'period': self.period,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BufferModel':
        check_known_keys(data, cls.FIELDS, "buffer")
        try:
            model = cls(**data)
        except ValueError as exc:
            raise ValidationError(f"Invalid buffer model: {exc}") from exc
        model.raise_if_invalid()
        return model


@dataclass
class BufferReport:
    """Outcome of a discrete-event run of the double buffer"""
    mode: str
    duration: float
    first_overflow: Optional[float]
    overflow_events: int
    records_in: int
    records_drained: int
    records_dropped: int
    max_occupancy: int
    timeline: List[Tuple[float, str]] = field(default_factory=list)

    @property
    def overflowed(self) -> bool:
        return self.first_overflow is not None

    @property
    def effective_throughput(self) -> float:
        """Drained records per simulated second"""
        return self.records_drained / self.duration if self.duration > 0 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mode': self.mode,
            'duration_s': self.duration,
            'overflowed': self.overflowed,
            'first_overflow_s': self.first_overflow,
            'overflow_events': self.overflow_events,
            'records_in': self.records_in,
            'records_drained': self.records_drained,
            'records_dropped': self.records_dropped,
            'max_occupancy': self.max_occupancy,
            'effective_throughput': self.effective_throughput,
            'interrupts': len(self.timeline),
        }


class ServerConfig(BaseModel, Validatable):
    """Network service settings (endpoint is ``host:port``)"""

    FIELDS = ('endpoint', 'mode', 'period_ms', 'buffer_records', 'rate', 'frame_records')

    def __init__(self, endpoint: str = "127.0.0.1:5555",
                 mode: TransferMode = TransferMode.CONTINUOUS, period_ms: float = 50.0,
                 buffer_records: int = 1 << 16, rate: Optional[float] = None,
                 frame_records: int = 8192):
        self.endpoint = endpoint
        self.mode = TransferMode(mode)
        self.period_ms = period_ms
        self.buffer_records = buffer_records
        self.rate = rate
        self.frame_records = frame_records

    @property
    def address(self) -> Tuple[str, int]:
        host, _, port = self.endpoint.rpartition(":")
        return host or "127.0.0.1", int(port)

    def _endpoint_ok(self, endpoint: Any) -> bool:
        if not isinstance(endpoint, str) or ":" not in endpoint:
            return False
        port = endpoint.rpartition(":")[2]
        return port.isdigit() and 0 <= int(port) <= 65535

    def get_validation_errors(self) -> List[str]:
        errors: List[str] = []
        checks = [
            validate(self.endpoint, "endpoint").required()
                .custom(self._endpoint_ok, "endpoint must look like host:port"),
            validate(self.period_ms, "period_ms").number().positive(),
            validate(self.buffer_records, "buffer_records").integer().min_value(1),
            validate(self.frame_records, "frame_records").integer().min_value(1),
        ]
        if self.rate is not None:
            checks.append(validate(self.rate, "rate").number().positive())
        for check in checks:
            errors.extend(check.get_errors())
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {
            'endpoint': self.endpoint,
            'mode': self.mode.value,
            'period_ms': self.period_ms,
            'buffer_records': self.buffer_records,
            'rate': self.rate,
            'frame_records': self.frame_records,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ServerConfig':
        check_known_keys(data, cls.FIELDS, "server")
        try:
            config = cls(**data)
        except ValueError as exc:
            raise ValidationError(f"Invalid server settings: {exc}") from exc
        config.raise_if_invalid()
        return config
