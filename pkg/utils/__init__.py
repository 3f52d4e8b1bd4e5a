# Utils package for the TDC toolkit

from .validators import Validator, validate, ValidationError
from .formatters import TableFormatter, ReportFormatter, format_number
from .fenwick import FenwickTree
from .export import (
    canonical_json, spec_hash, csv_text, json_text,
    write_csv, write_json, read_csv, histogram_rows
)

__all__ = [
    # Validators
    'Validator', 'validate', 'ValidationError',

    # Formatters
    'TableFormatter', 'ReportFormatter', 'format_number',

    # Data structures
    'FenwickTree',

    # Export
    'canonical_json', 'spec_hash', 'csv_text', 'json_text',
    'write_csv', 'write_json', 'read_csv', 'histogram_rows'
]
