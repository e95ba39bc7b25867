"""Evidence, RLCT and mean-field CAVI tools for normal-crossing singular models."""

from ._backend import BACKEND
from .errors import (
    ConditioningError,
    ConvergenceError,
    DomainError,
    NumericalFailure,
    SingviError,
    UnsupportedModelError,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConditioningError",
    "ConvergenceError",
    "DomainError",
    "NumericalFailure",
    "SingviError",
    "UnsupportedModelError",
]
