# Models package for the TDC toolkit

from .base import BaseModel, Validatable, check_known_keys
from .delay_line import (
    DelayProfile, DelayLineModel, ProfileKind, ThermometerCode, RawTag, TagBatch,
    DEFAULT_F_S, COARSE_BITS, COARSE_MODULUS, OPERATING_RANGE, SANITY_RANGE
)
from .calibration import CalibrationTable, SteadyState, SteadyStatus, MAX_FINE_BINS
from .source import SourceConfig, SourceKind, EventStream, KIND_DEFAULTS, GOLDEN_RATIO
from .reports import (
    GaussianFit, JitterReport, PulseShapeReport, LinearityReport, QberReport, FWHM_FACTOR
)
from .stream import TransferMode, BufferModel, BufferReport, ServerConfig
from .experiment import (
    ExperimentSpec, Strategy, OutputFormat, TemperatureRange, QkdSettings, StreamSettings
)

__all__ = [
    'BaseModel', 'Validatable', 'check_known_keys',
    'DelayProfile', 'DelayLineModel', 'ProfileKind', 'ThermometerCode', 'RawTag', 'TagBatch',
    'DEFAULT_F_S', 'COARSE_BITS', 'COARSE_MODULUS', 'OPERATING_RANGE', 'SANITY_RANGE',
    'CalibrationTable', 'SteadyState', 'SteadyStatus', 'MAX_FINE_BINS',
    'SourceConfig', 'SourceKind', 'EventStream', 'KIND_DEFAULTS', 'GOLDEN_RATIO',
    'GaussianFit', 'JitterReport', 'PulseShapeReport', 'LinearityReport', 'QberReport',
    'FWHM_FACTOR',
    'TransferMode', 'BufferModel', 'BufferReport', 'ServerConfig',
    'ExperimentSpec', 'Strategy', 'OutputFormat', 'TemperatureRange', 'QkdSettings',
    'StreamSettings'
]
