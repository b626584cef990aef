# src/schemas/run_schema.py
"""
Run configurations for the CLI subcommands (Pydantic models)

Each subcommand reads one of these blocks from its --config JSON file;
`toric-credit schema <subcommand>` prints the model's JSON schema.
"""

from __future__ import annotations

from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveInt, model_validator

from ..core.exceptions import InvalidParametersException
from .domain_schema import (
    CalibrationBackend,
    CdoContract,
    ChainSpec,
    CopulaSpec,
    FirmGraph,
    MarginalSpec,
    ModelParams,
    SectorParams,
    SmileSearchConfig,
    TrancheSpec,
)


class _Block(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class GridRange(_Block):
    """Evenly spaced values, endpoints included"""
    start: float
    stop: float
    num: PositiveInt

    def values(self) -> list[float]:
        return np.linspace(self.start, self.stop, self.num).tolist()


Grid = Union[GridRange, list[float]]


def grid_values(grid: Grid) -> list[float]:
    return grid.values() if isinstance(grid, GridRange) else [float(x) for x in grid]


class GraphDocument(_Block):
    """{"nodes": M, "edges": [[u, v], ...], "eta_node": [...], "eta_edge": [...]}, 1-based"""
    nodes: PositiveInt
    edges: list[tuple[int, int]] = Field(default_factory=list)
    labels: Optional[list[str]] = None
    eta_node: Optional[list[float]] = None
    eta_edge: Optional[list[float]] = None

    def graph(self) -> FirmGraph:
        return FirmGraph(
            node_count=self.nodes,
            edges=tuple(self.edges),
            labels=tuple(self.labels) if self.labels else None,
        )

    def params(self) -> ModelParams:
        if self.eta_node is None:
            raise InvalidParametersException("eta_node is required", path="graph.eta_node")
        return ModelParams(eta_node=tuple(self.eta_node), eta_edge=tuple(self.eta_edge or ()))

    @classmethod
    def from_model(cls, graph: FirmGraph, params: Optional[ModelParams] = None) -> "GraphDocument":
        return cls(
            nodes=graph.node_count,
            edges=[tuple(e) for e in graph.edges],
            labels=list(graph.labels) if graph.labels else None,
            eta_node=list(params.eta_node) if params else None,
            eta_edge=list(params.eta_edge) if params else None,
        )


class TargetMarginals(_Block):
    """P_i per node and P_uv per graph edge, in the graph's edge order"""
    single: list[float]
    pair: list[float] = Field(default_factory=list)


class ContractTerms(_Block):
    """Regular payment schedule; tranches default to the standard index grid"""
    maturity: float = Field(default=5.0, gt=0)
    frequency: float = Field(default=0.5, gt=0)
    rate: Optional[float] = Field(default=0.05, ge=0)
    discount_factors: Optional[list[float]] = None
    notional: float = Field(default=1.0, gt=0)
    tranches: Optional[list[TrancheSpec]] = None

    def contract(self) -> CdoContract:
        from ..core.pricing import standard_tranches

        periods = int(round(self.maturity / self.frequency))
        tranches = tuple(self.tranches) if self.tranches else standard_tranches()
        return CdoContract(
            notional=self.notional,
            payment_times=tuple(self.frequency * k for k in range(1, periods + 1)),
            rate=None if self.discount_factors is not None else self.rate,
            discount_factors=tuple(self.discount_factors) if self.discount_factors else None,
            tranches=tranches,
        )


class ChainBlock(_Block):
    """Single-sector chain; eta_F may be replaced by a horizon default probability"""
    n_firms: PositiveInt
    eta_S: float
    eta_FS: float
    eta_F: Optional[float] = None
    horizon_default_prob: Optional[float] = Field(default=None, gt=0, lt=1)
    horizon_steps: PositiveInt = 1
    tilt: Literal["post_removal", "pre_removal"] = "post_removal"

    @model_validator(mode="after")
    def _one_marginal_source(self) -> "ChainBlock":
        if (self.eta_F is None) == (self.horizon_default_prob is None):
            raise ValueError("give exactly one of eta_F or horizon_default_prob")
        return self

    def spec(self, removal_prob: float) -> ChainSpec:
        from ..core.multiperiod import scaled_chain_spec

        base = ChainSpec(
            n_firms=self.n_firms,
            eta_S=self.eta_S,
            eta_FS=self.eta_FS,
            eta_F=self.eta_F if self.eta_F is not None else 0.0,
            removal_prob=removal_prob,
            tilt=self.tilt,
        )
        if self.horizon_default_prob is None:
            return base
        return scaled_chain_spec(base, self.horizon_default_prob, self.horizon_steps)


# ============================================================================
# SUBCOMMAND CONFIGS
# ============================================================================

class CalibrateConfig(_Block):
    graph: GraphDocument
    target: Optional[TargetMarginals] = None
    counts: Optional[list[float]] = None
    tolerance: Optional[float] = Field(default=None, gt=0)
    max_iterations: Optional[PositiveInt] = None
    backend: Optional[CalibrationBackend] = None

    @model_validator(mode="after")
    def _one_target(self) -> "CalibrateConfig":
        if (self.target is None) == (self.counts is None):
            raise ValueError("give exactly one of target or counts")
        return self

    def marginal_spec(self) -> MarginalSpec:
        assert self.target is not None
        graph = self.graph.graph()
        return MarginalSpec(
            single=tuple(self.target.single),
            pair=tuple(self.target.pair),
            edges=graph.edges,
        )


class LossDistConfig(_Block):
    sector: SectorParams


class CorrSurfaceConfig(_Block):
    q: float = Field(gt=0, lt=1)
    n_firms: PositiveInt
    eta_S: Grid
    eta_FS: Grid


class MultiLossConfig(_Block):
    chain: ChainBlock
    steps: list[NonNegativeInt]
    removal_probs: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_probs(self) -> "MultiLossConfig":
        if any(not 0.0 <= p <= 1.0 for p in self.removal_probs):
            raise ValueError("removal probabilities must lie in [0, 1]")
        return self


class SimulateConfig(MultiLossConfig):
    n_paths: PositiveInt = 100_000
    seed: Optional[NonNegativeInt] = None


class PriceConfig(_Block):
    contract: ContractTerms = Field(default_factory=ContractTerms)
    chain: Optional[ChainBlock] = None
    removal_prob: float = Field(default=0.5, ge=0, le=1)
    term_structure_csv: Optional[str] = None
    recovery: float = Field(default=0.4, ge=0, lt=1)

    @model_validator(mode="after")
    def _one_model(self) -> "PriceConfig":
        if (self.chain is None) == (self.term_structure_csv is None):
            raise ValueError("give exactly one of chain or term_structure_csv")
        return self


class CopulaPriceConfig(_Block):
    copula: CopulaSpec
    contract: ContractTerms = Field(default_factory=ContractTerms)
    n_paths: PositiveInt = 100_000
    seed: Optional[NonNegativeInt] = None


class ImpliedCorrConfig(_Block):
    """Observed spreads are fractions per tranche label; asset_correlation in copula is ignored"""
    copula: CopulaSpec
    contract: ContractTerms = Field(default_factory=ContractTerms)
    observed: dict[str, float]
    n_paths: PositiveInt = 50_000
    seed: Optional[NonNegativeInt] = None


class FitSmileConfig(_Block):
    ratings: list[SmileSearchConfig] = Field(min_length=1)
    implied: bool = True


FigureName = Literal["fig2", "fig3-6", "fig7", "fig8", "fig9", "horizon"]


class ReproduceConfig(_Block):
    """Size knobs for the figure tables; defaults regenerate the full data"""
    n_paths: PositiveInt = 20_000
    surface_points: PositiveInt = 41
    smile_evaluations: NonNegativeInt = 300
    seed: Optional[NonNegativeInt] = None
    threads: Optional[PositiveInt] = None


RUN_CONFIGS: dict[str, type[BaseModel]] = {
    "calibrate": CalibrateConfig,
    "loss-dist": LossDistConfig,
    "corr-surface": CorrSurfaceConfig,
    "multi-loss": MultiLossConfig,
    "simulate": SimulateConfig,
    "price": PriceConfig,
    "copula-price": CopulaPriceConfig,
    "implied-corr": ImpliedCorrConfig,
    "fit-smile": FitSmileConfig,
    "reproduce": ReproduceConfig,
}
