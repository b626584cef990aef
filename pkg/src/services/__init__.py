# src/services/__init__.py
"""Services module"""

from .calibration_service import (
    BaseCalibrationBackend,
    IPFBackend,
    GradientBackend,
    CalibrationBackendFactory,
    get_calibration_backend,
    fit,
    fit_counts,
    membership,
    log_likelihood,
)
from .smile_service import SmileService, SmileFitResult, fit_smile_params
from .reproduce_service import ReproduceService, get_reproduce_service

__all__ = [
    # Calibration Service
    "BaseCalibrationBackend",
    "IPFBackend",
    "GradientBackend",
    "CalibrationBackendFactory",
    "get_calibration_backend",
    "fit",
    "fit_counts",
    "membership",
    "log_likelihood",
    # Smile Service
    "SmileService",
    "SmileFitResult",
    "fit_smile_params",
    # Reproduce Service
    "ReproduceService",
    "get_reproduce_service",
]
