"""
Validation utilities for the TDC toolkit.
Demonstrates: Validation patterns, Method chaining, Error handling
"""

import math
from numbers import Real
from typing import Any, Callable, Iterable, List

import numpy as np


class ValidationError(Exception):
    """Exception raised for validation errors"""
    pass


def _is_number(value: Any) -> bool:
    return isinstance(value, Real) and not isinstance(value, bool)


class Validator:
    """
    Chainable validator for numeric configuration values and arrays.
    Demonstrates: Strategy pattern, Method chaining
    """

    def __init__(self, value: Any, field_name: str = "field"):
        self.value = value
        self.field_name = field_name
        self.errors: List[str] = []

    def required(self, message: str = None) -> 'Validator':
        """Check if value is not None or empty"""
        if message is None:
            message = f"{self.field_name} is required"

        if self.value is None or (isinstance(self.value, str) and not self.value.strip()):
            self.errors.append(message)

        return self

    def number(self, message: str = None) -> 'Validator':
        """Check that value is a finite real number"""
        if message is None:
            message = f"{self.field_name} must be a finite number"

        if not _is_number(self.value) or not math.isfinite(float(self.value)):
            self.errors.append(message)

        return self

    def integer(self, message: str = None) -> 'Validator':
        """Check that value is an integer"""
        if message is None:
            message = f"{self.field_name} must be an integer"

        if isinstance(self.value, bool) or not isinstance(self.value, (int, np.integer)):
            self.errors.append(message)

        return self

    def min_value(self, min_val: float, message: str = None) -> 'Validator':
        """Check minimum value for numbers"""
        if message is None:
            message = f"{self.field_name} must be at least {min_val}"

        if _is_number(self.value) and self.value < min_val:
            self.errors.append(message)

        return self

    def max_value(self, max_val: float, message: str = None) -> 'Validator':
        """Check maximum value for numbers"""
        if message is None:
            message = f"{self.field_name} must be at most {max_val}"

        if _is_number(self.value) and self.value > max_val:
            self.errors.append(message)

        return self

    def positive(self, message: str = None) -> 'Validator':
        """Check that a number is strictly positive"""
        if message is None:
            message = f"{self.field_name} must be positive"

        if _is_number(self.value) and not self.value > 0:
            self.errors.append(message)

        return self

    def probability(self, message: str = None) -> 'Validator':
        """Check that a number lies in [0, 1]"""
        if message is None:
            message = f"{self.field_name} must be a probability in [0, 1]"

        if _is_number(self.value) and not 0.0 <= self.value <= 1.0:
            self.errors.append(message)

        return self

    def one_of(self, options: Iterable[Any], message: str = None) -> 'Validator':
        """Check membership in a fixed set of options"""
        options = list(options)
        if message is None:
            message = f"{self.field_name} must be one of {', '.join(map(str, options))}"

        if self.value not in options:
            self.errors.append(message)

        return self

    def non_negative_values(self, message: str = None) -> 'Validator':
        """Check that every element of an array-like value is >= 0"""
        if message is None:
            message = f"{self.field_name} must not contain negative values"

        values = np.asarray(self.value, dtype=float)
        if values.size and (np.any(values < 0) or not np.all(np.isfinite(values))):
            self.errors.append(message)

        return self

    def length(self, expected: int, message: str = None) -> 'Validator':
        """Check the length of a sized value"""
        if message is None:
            message = f"{self.field_name} must have length {expected}"

        if self.value is None or len(self.value) != expected:
            self.errors.append(message)

        return self

    def custom(self, validator_func: Callable[[Any], bool], message: str) -> 'Validator':
        """Apply custom validation function"""
        if not validator_func(self.value):
            self.errors.append(message)

        return self

    def is_valid(self) -> bool:
        """Check if all validations passed"""
        return len(self.errors) == 0

    def get_errors(self) -> List[str]:
        """Get list of validation errors"""
        return self.errors.copy()

    def raise_if_invalid(self) -> None:
        """Raise ValidationError if validation failed"""
        if not self.is_valid():
            raise ValidationError(f"Validation failed: {', '.join(self.errors)}")


def validate(value: Any, field_name: str = "field") -> Validator:
    """Create a new validator instance"""
    return Validator(value, field_name)
