# src/core/__init__.py
"""Core module with exceptions"""

from .exceptions import (
    ToricCreditException,
    InvalidParametersException,
    UsageException,
    CapacityException,
    DomainException,
    ConvergenceException,
    BudgetException,
    BracketException,
    RangeException,
    DegenerateTrancheException,
    NumericException,
)

__all__ = [
    # Exceptions
    "ToricCreditException",
    "InvalidParametersException",
    "UsageException",
    "CapacityException",
    "DomainException",
    "ConvergenceException",
    "BudgetException",
    "BracketException",
    "RangeException",
    "DegenerateTrancheException",
    "NumericException",
]
