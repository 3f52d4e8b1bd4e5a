# Services package for the TDC toolkit

from .errors import (
    TDCError,
    ConfigError,
    DelayLineError,
    DecoderError,
    CalibrationError,
    SourceError,
    AnalysisError,
    StreamError,
    CommensurabilityWarning
)
from .pipeline import TdcChannel
from .calib import SteadyCalibrator
from .sources import EventSource
from .server import TagServer, CaptureResult
from .experiments import (
    Bench,
    SweepResult,
    load_spec,
    save_spec,
    run_tempsweep,
    run_calib_compare,
    run_qkd,
    run_stream_bench,
    simulate_capture,
    analyze_capture,
    source_records
)

__all__ = [
    'TDCError',
    'ConfigError',
    'DelayLineError',
    'DecoderError',
    'CalibrationError',
    'SourceError',
    'AnalysisError',
    'StreamError',
    'CommensurabilityWarning',
    'TdcChannel',
    'SteadyCalibrator',
    'EventSource',
    'TagServer',
    'CaptureResult',
    'Bench',
    'SweepResult',
    'load_spec',
    'save_spec',
    'run_tempsweep',
    'run_calib_compare',
    'run_qkd',
    'run_stream_bench',
    'simulate_capture',
    'analyze_capture',
    'source_records'
]
