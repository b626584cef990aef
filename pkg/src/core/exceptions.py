# src/core/exceptions.py
"""
Custom exceptions for the application.

Every exception carries the process exit code the CLI reports for it.
"""

from typing import Optional


EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64


class ToricCreditException(Exception):
    """Base exception for toric-credit errors"""
    def __init__(self, message: str, code: int = EXIT_NUMERIC):
        self.message = message
        self.code = code
        super().__init__(self.message)


class InvalidParametersException(ToricCreditException):
    """Invalid parameters or malformed configuration"""
    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        location = f" at '{path}'" if path else ""
        super().__init__(
            message=f"Invalid parameters{location}: {message}",
            code=EXIT_VALIDATION
        )


class UsageException(ToricCreditException):
    """Unknown subcommand or flag"""
    def __init__(self, message: str):
        super().__init__(
            message=f"Usage error: {message}",
            code=EXIT_USAGE
        )


class CapacityException(ToricCreditException):
    """Exact enumeration would exceed the configured cap"""
    def __init__(self, what: str, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(
            message=f"Capacity exceeded for {what}: {size} > cap {cap}"
        )


class DomainException(ToricCreditException):
    """Input outside the domain of an operation"""
    def __init__(self, operation: str, error: str):
        super().__init__(
            message=f"Domain error in {operation}: {error}"
        )


class ConvergenceException(ToricCreditException):
    """Calibration target is not in the interior of the marginal polytope"""
    def __init__(self, status: str, direction: str):
        self.status = status
        self.direction = direction
        super().__init__(
            message=f"Calibration cannot converge, target is {status}: {direction}"
        )


class BudgetException(ToricCreditException):
    """Iteration budget exhausted"""
    def __init__(self, operation: str, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message=(
                f"{operation} exhausted its budget after {iterations} iterations "
                f"(residual {residual:.3e})"
            )
        )


class BracketException(ToricCreditException):
    """Root not bracketed by the search interval"""
    def __init__(self, operation: str, lower: float, upper: float):
        self.lower = lower
        self.upper = upper
        super().__init__(
            message=f"{operation}: no sign change in bracket [{lower}, {upper}]"
        )


class RangeException(ToricCreditException):
    """Target value outside the attainable interval"""
    def __init__(self, operation: str, target: float, attainable: tuple[float, float]):
        self.target = target
        self.attainable = attainable
        super().__init__(
            message=(
                f"{operation}: target {target:.6g} outside attainable interval "
                f"[{attainable[0]:.6g}, {attainable[1]:.6g}]"
            )
        )


class DegenerateTrancheException(ToricCreditException):
    """Premium leg vanishes, spread undefined"""
    def __init__(self, label: str):
        super().__init__(
            message=f"Degenerate tranche '{label}': premium leg is zero"
        )


class NumericException(ToricCreditException):
    """Numerical routine failed to reach its accuracy"""
    def __init__(self, operation: str, error: str):
        super().__init__(
            message=f"Numerical failure in {operation}: {error}"
        )
