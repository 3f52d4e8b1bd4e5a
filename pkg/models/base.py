"""
Base classes for the TDC toolkit models.
Demonstrates: Abstraction, Encapsulation, Serialization contracts
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Iterable, List
import json

from utils.validators import ValidationError


class BaseModel(ABC):
    """
    Abstract base class for every serializable model in the toolkit.
    Demonstrates: Abstraction, Template method (to_json builds on to_dict)
    """

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """Convert model to a JSON-compatible dictionary"""
        pass

    @classmethod
    @abstractmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BaseModel':
        """Create model from dictionary data"""
        pass

    def to_json(self) -> str:
        """Canonical JSON text (sorted keys, stable across runs)"""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> 'BaseModel':
        """Create model from JSON text"""
        return cls.from_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        """Models compare by their serialized content"""
        if not isinstance(other, BaseModel) or type(self) is not type(other):
            return False
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(json.dumps(self.to_dict(), sort_keys=True))


class Validatable(ABC):
    """
    Interface for models that can be validated.
    Demonstrates: Single Responsibility Principle
    """

    @abstractmethod
    def get_validation_errors(self) -> List[str]:
        """Get list of validation errors"""
        pass

    def validate(self) -> bool:
        """Validate model data"""
        return len(self.get_validation_errors()) == 0

    def raise_if_invalid(self) -> None:
        """Raise ValidationError listing every problem found"""
        errors = self.get_validation_errors()
        if errors:
            raise ValidationError(f"{type(self).__name__} validation failed: {'; '.join(errors)}")


def check_known_keys(data: Dict[str, Any], allowed: Iterable[str], model_name: str) -> None:
    """Reject configuration keys the model does not understand"""
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ValidationError(f"Unknown {model_name} keys: {', '.join(unknown)}")
