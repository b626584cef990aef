# src/config/settings.py
"""
Numerical and runtime settings.

Lookup order: TORIC_CREDIT_* environment variables, then .env, then the
defaults below. A variable set in the environment always wins over .env.
"""

from functools import lru_cache
from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables"""

    # Application
    app_name: str = "toric-credit"
    app_version: str = "0.1.0"
    debug: bool = False

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    log_file: Optional[str] = None

    # Exact enumeration limits
    enumeration_cap: int = Field(default=20, ge=1, le=26)
    sector_cap: int = Field(default=20, ge=1, le=26)

    # Calibration
    calibration_tolerance: float = Field(default=1e-10, gt=0)
    calibration_max_iterations: int = Field(default=100_000, ge=1)
    calibration_backend: Literal["ipf", "maxent_gradient"] = "ipf"
    membership_tolerance: float = Field(default=1e-9, gt=0)

    # Root finders
    eta_f_bracket: tuple[float, float] = (-50.0, 50.0)
    eta_f_tolerance: float = 1e-10
    implied_corr_tolerance: float = 1e-3

    # Quadrature
    quadrature_tolerance: float = 1e-10

    # Monte Carlo / parallelism
    threads: int = Field(default=1, ge=1)
    seed: int = Field(default=20240101, ge=0)
    mc_block_size: int = Field(default=65_536, ge=1)

    # Pricing conventions
    apply_lgd: bool = False

    model_config = SettingsConfigDict(
        env_prefix="TORIC_CREDIT_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


# Convenience function to get settings
settings = get_settings()
