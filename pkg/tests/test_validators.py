"""Tests for the chainable validator and the model base classes"""

import numpy as np
import pytest

from models import BufferModel, DelayProfile, ServerConfig, SourceConfig, SourceKind
from utils import ValidationError, validate


class TestValidator:
    def test_valid_chain_has_no_errors(self):
        check = validate(0.5, "p").required().number().probability().positive()
        assert check.is_valid()
        assert check.get_errors() == []

    def test_errors_accumulate_in_order(self):
        check = validate(-2, "count").integer().min_value(0).positive()
        assert check.get_errors() == ["count must be at least 0", "count must be positive"]

    def test_number_rejects_bool_and_nan(self):
        assert not validate(True, "x").number().is_valid()
        assert not validate(float("nan"), "x").number().is_valid()
        assert not validate("3", "x").number().is_valid()

    def test_integer_accepts_numpy_integers(self):
        assert validate(np.int64(4), "n").integer().is_valid()
        assert not validate(4.0, "n").integer().is_valid()

    def test_range_checks_skip_non_numbers(self):
        # only the type error is reported
        assert validate("a", "x").number().min_value(1).get_errors() == ["x must be a finite number"]

    def test_one_of_and_length(self):
        assert validate("csv", "format").one_of(["csv", "json"]).is_valid()
        assert not validate("xml", "format").one_of(["csv", "json"]).is_valid()
        assert not validate([1, 2], "gradient").length(3).is_valid()

    def test_non_negative_values(self):
        assert validate([0.0, 1.5], "delays").non_negative_values().is_valid()
        assert not validate([0.0, -1e-3], "delays").non_negative_values().is_valid()
        assert not validate([np.inf], "delays").non_negative_values().is_valid()

    def test_custom_message(self):
        errors = validate(3, "capacity").custom(lambda c: c % 2 == 0, "capacity must be even").get_errors()
        assert errors == ["capacity must be even"]

    def test_raise_if_invalid(self):
        with pytest.raises(ValidationError, match="required"):
            validate("  ", "endpoint").required().raise_if_invalid()


class TestModelBase:
    def test_models_compare_by_content(self):
        assert DelayProfile(seed=3) == DelayProfile(seed=3)
        assert DelayProfile(seed=3) != DelayProfile(seed=4)
        assert hash(ServerConfig()) == hash(ServerConfig())

    def test_json_round_trip(self):
        source = SourceConfig(SourceKind.LASER_SPD, seed=5, background_rate=100.0)
        assert SourceConfig.from_json(source.to_json()) == source

    def test_unknown_keys_are_rejected(self):
        with pytest.raises(ValidationError, match="Unknown buffer keys: colour"):
            BufferModel.from_dict({"capacity": 64, "colour": "red"})

    def test_validate_reports_all_problems(self):
        model = BufferModel(capacity=7, fill_rate=-1.0)
        errors = model.get_validation_errors()
        assert "capacity must be even" in errors
        assert "fill_rate must be positive" in errors
        assert not model.validate()
        with pytest.raises(ValidationError):
            model.raise_if_invalid()
