"""
Exception hierarchy for the TDC services.
"""


class TDCError(Exception):
    """Base exception for TDC toolkit errors"""
    pass


class ConfigError(TDCError):
    """Raised when a configuration file or parameter set is invalid"""
    pass


class DelayLineError(TDCError):
    """Raised for invalid delay profiles or temperatures outside the sanity range"""
    pass


class DecoderError(TDCError):
    """Raised when a thermometer code does not match the line length"""
    pass


class CalibrationError(TDCError):
    """Raised when a calibration cannot be built or applied"""
    pass


class SourceError(TDCError):
    """Raised for invalid source parameters"""
    pass


class AnalysisError(TDCError):
    """Raised when metrics are requested on empty or mismatched data"""
    pass


class StreamError(TDCError):
    """Raised for record overflow, bad capture files and transport failures"""
    pass


class CommensurabilityWarning(UserWarning):
    """A periodic source is locked to the sampling clock; phases are not uniform"""
    pass
