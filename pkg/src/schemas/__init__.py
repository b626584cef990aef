# src/schemas/__init__.py
"""Data models module"""

from .domain_schema import (
    FirmGraph,
    ModelParams,
    MarginalSpec,
    CalibrationBackend,
    CalibrationConfig,
    SectorParams,
    ChainSpec,
    TrancheSpec,
    CdoContract,
    CopulaSpec,
    SmileSearchConfig,
)
from .run_schema import (
    GridRange,
    GraphDocument,
    TargetMarginals,
    ContractTerms,
    ChainBlock,
    CalibrateConfig,
    LossDistConfig,
    CorrSurfaceConfig,
    MultiLossConfig,
    SimulateConfig,
    PriceConfig,
    CopulaPriceConfig,
    ImpliedCorrConfig,
    FitSmileConfig,
    ReproduceConfig,
    RUN_CONFIGS,
    grid_values,
)

__all__ = [
    # Domain Schemas
    "FirmGraph",
    "ModelParams",
    "MarginalSpec",
    "CalibrationBackend",
    "CalibrationConfig",
    "SectorParams",
    "ChainSpec",
    "TrancheSpec",
    "CdoContract",
    "CopulaSpec",
    "SmileSearchConfig",
    # Run Configs
    "GridRange",
    "GraphDocument",
    "TargetMarginals",
    "ContractTerms",
    "ChainBlock",
    "CalibrateConfig",
    "LossDistConfig",
    "CorrSurfaceConfig",
    "MultiLossConfig",
    "SimulateConfig",
    "PriceConfig",
    "CopulaPriceConfig",
    "ImpliedCorrConfig",
    "FitSmileConfig",
    "ReproduceConfig",
    "RUN_CONFIGS",
    "grid_values",
]
