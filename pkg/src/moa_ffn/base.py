"""
Shared enums and the exception hierarchy for the moa_ffn package.

Every error raised by the library derives from MoAError so callers (the
pipeline and the CLI) can map failures to stable exit codes.
"""

from enum import Enum
from typing import Optional, Sequence
import logging

logger = logging.getLogger(__name__)


class Flavor(Enum):
    """FFN families: two-matrix (Type-I) and gated three-matrix (Type-II)."""

    TYPE_I = "type1"
    TYPE_II = "type2"


class MoAError(Exception):
    """Root exception for the moa_ffn package."""

    pass


class DimensionError(MoAError):
    """Raised when tensor shapes do not agree."""

    def __init__(self, message: str, shapes: Sequence[Sequence[int]] = ()):
        self.shapes = [tuple(s) for s in shapes]
        if self.shapes:
            message = f"{message} (shapes: {', '.join(str(s) for s in self.shapes)})"
        super().__init__(message)


class ContractError(MoAError):
    """Raised when an operation is called outside its pre-conditions."""

    pass


class NumericError(MoAError):
    """Raised when a non-finite value appears where finite values are required."""

    def __init__(self, message: str, where: Optional[str] = None):
        self.where = where
        if where is not None:
            message = f"{message} [{where}]"
        super().__init__(message)


class ConfigError(MoAError):
    """Raised for invalid configuration values or documents."""

    def __init__(
        self, message: str, key: Optional[str] = None, line: Optional[int] = None
    ):
        self.key = key
        self.line = line
        self.detail = message
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if key is not None:
            prefix.append(f"key '{key}'")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class ParseError(ConfigError):
    """Raised when an activation-dictionary code cannot be parsed."""

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} at position {position}")


class FlavorError(ConfigError):
    """Raised when an activation is not allowed for the requested FFN flavor."""

    pass


class RangeError(MoAError):
    """Raised when a value falls outside the admissible range of an embedding."""

    pass


class DataError(MoAError):
    """Raised for missing, empty or out-of-range training data."""

    pass


class UnsupportedError(MoAError):
    """Raised when a construction is requested for a target it cannot build."""

    pass


class ProbeError(MoAError):
    """Raised when a jump-profile probe lands on a derivative singularity."""

    pass


class GeometryError(MoAError):
    """Raised when a ridge hyperplane does not meet the domain."""

    pass


class FitError(MoAError):
    """Raised when every fitting restart diverges."""

    pass


class TheoremAssertionError(MoAError):
    """Raised when a witness exactness check or lower-bound floor is violated."""

    def __init__(self, message: str, violations: Sequence[str] = ()):
        self.violations = list(violations)
        if self.violations:
            message = f"{message}: " + "; ".join(self.violations)
        super().__init__(message)
