"""Translate exceptions into CLI exit codes."""

from __future__ import annotations

import functools
import json
import logging
from typing import Callable, TypeVar

import numpy as np
from pydantic import ValidationError

from .exceptions import EXIT_NUMERIC, EXIT_VALIDATION, ToricCreditException

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., int])

# Floating-point and linear-algebra failures raised by numpy or scipy.
NUMERIC_ERRORS = (ArithmeticError, np.linalg.LinAlgError)


def describe_validation_error(exc: ValidationError) -> str:
    """First error of a pydantic ValidationError as 'path: message'."""
    errors = exc.errors()
    if not errors:
        return str(exc)
    first = errors[0]
    path = ".".join(str(part) for part in first.get("loc", ())) or "<root>"
    return f"{path}: {first.get('msg', 'invalid value')}"


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ToricCreditException):
        return exc.code
    if isinstance(exc, (ValidationError, json.JSONDecodeError)):
        return EXIT_VALIDATION
    if isinstance(exc, NUMERIC_ERRORS):
        return EXIT_NUMERIC
    return 1


def handle_errors(func: F) -> F:
    """Run a CLI command, logging failures and returning their exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            return func(*args, **kwargs)
        except ValidationError as exc:
            logger.error("Invalid configuration: %s", describe_validation_error(exc))
            return exit_code_for(exc)
        except json.JSONDecodeError as exc:
            logger.error("Malformed JSON: %s", exc)
            return exit_code_for(exc)
        except ToricCreditException as exc:
            logger.error(exc.message)
            return exit_code_for(exc)
        except NUMERIC_ERRORS as exc:
            logger.error("Numerical failure: %s: %s", type(exc).__name__, exc)
            return exit_code_for(exc)

    return wrapper  # type: ignore[return-value]
