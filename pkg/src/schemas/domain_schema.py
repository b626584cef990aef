# src/schemas/domain_schema.py
"""
Domain-specific data schema with Pydantic models.

Node indices are 1-based everywhere a user can see them (JSON documents,
edge tuples, labels); numerical code converts to 0-based arrays.
"""

from __future__ import annotations

import math
from enum import Enum
from itertools import combinations
from typing import Literal, Optional

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    FiniteFloat,
    NonNegativeInt,
    PositiveInt,
    field_validator,
    model_validator,
)

from ..config import settings


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ============================================================================
# GRAPH MODEL
# ============================================================================

class FirmGraph(_Frozen):
    """Undirected graph of firm and sector nodes"""
    node_count: PositiveInt
    edges: tuple[tuple[int, int], ...] = ()
    labels: Optional[tuple[str, ...]] = None

    @field_validator("edges", mode="before")
    @classmethod
    def _normalize_edges(cls, value):
        return tuple(tuple(sorted((int(u), int(v)))) for u, v in value)

    @model_validator(mode="after")
    def _check_edges(self) -> "FirmGraph":
        seen: set[tuple[int, int]] = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if u < 1 or v > self.node_count:
                raise ValueError(f"edge ({u},{v}) outside nodes 1..{self.node_count}")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u},{v})")
            seen.add((u, v))
        if self.labels is not None and len(self.labels) != self.node_count:
            raise ValueError("labels must name every node")
        return self

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def dimension(self) -> int:
        """Number of sufficient statistics, M + |E|."""
        return self.node_count + self.edge_count

    def edge_array(self) -> np.ndarray:
        """0-based (|E|, 2) array of endpoints."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64) - 1

    def edge_index(self, u: int, v: int) -> int:
        key = (min(u, v), max(u, v))
        try:
            return self.edges.index(key)
        except ValueError:
            raise KeyError(f"({u},{v}) is not an edge") from None

    def triangles(self) -> list[tuple[int, int, int]]:
        """All 3-cliques as sorted 1-based triples."""
        edge_set = set(self.edges)
        found = []
        for a, b, c in combinations(range(1, self.node_count + 1), 3):
            if (a, b) in edge_set and (a, c) in edge_set and (b, c) in edge_set:
                found.append((a, b, c))
        return found

    def components(self) -> list[list[int]]:
        """Connected components as sorted lists of 1-based nodes."""
        parent = list(range(self.node_count + 1))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in self.edges:
            parent[find(u)] = find(v)
        groups: dict[int, list[int]] = {}
        for node in range(1, self.node_count + 1):
            groups.setdefault(find(node), []).append(node)
        return sorted(groups.values())

    @classmethod
    def triangle(cls) -> "FirmGraph":
        return cls(node_count=3, edges=((1, 2), (1, 3), (2, 3)))

    @classmethod
    def complete(cls, node_count: int) -> "FirmGraph":
        return cls(
            node_count=node_count,
            edges=tuple(combinations(range(1, node_count + 1), 2)),
        )


class ModelParams(_Frozen):
    """Node weights eta_i and edge weights eta_uv (theta = exp(eta))"""
    eta_node: tuple[FiniteFloat, ...]
    eta_edge: tuple[FiniteFloat, ...] = ()

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.eta_node + self.eta_edge, dtype=float)

    @property
    def theta(self) -> np.ndarray:
        return np.exp(self.vector)

    def matches(self, graph: FirmGraph) -> bool:
        return (
            len(self.eta_node) == graph.node_count
            and len(self.eta_edge) == graph.edge_count
        )

    @classmethod
    def zeros(cls, graph: FirmGraph) -> "ModelParams":
        return cls.from_vector(graph, np.zeros(graph.dimension))

    @classmethod
    def from_vector(cls, graph: FirmGraph, vector: np.ndarray) -> "ModelParams":
        values = [float(x) for x in np.asarray(vector, dtype=float)]
        return cls(
            eta_node=tuple(values[: graph.node_count]),
            eta_edge=tuple(values[graph.node_count:]),
        )


class MarginalSpec(_Frozen):
    """Single-node marginals P_i and pairwise joint marginals P_uv"""
    single: tuple[FiniteFloat, ...]
    pair: tuple[FiniteFloat, ...] = ()
    edges: tuple[tuple[int, int], ...] = ()

    @field_validator("single", "pair")
    @classmethod
    def _in_unit_interval(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        for x in value:
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"marginal {x} outside [0, 1]")
        return value

    @field_validator("edges", mode="before")
    @classmethod
    def _normalize_edges(cls, value):
        return tuple(tuple(sorted((int(u), int(v)))) for u, v in value)

    @model_validator(mode="after")
    def _pair_per_edge(self) -> "MarginalSpec":
        if len(self.pair) != len(self.edges):
            raise ValueError(
                f"{len(self.pair)} pair marginals for {len(self.edges)} edges"
            )
        return self

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.single + self.pair, dtype=float)

    def pair_for(self, u: int, v: int) -> float:
        key = (min(u, v), max(u, v))
        try:
            return self.pair[self.edges.index(key)]
        except ValueError:
            raise KeyError(f"no pair marginal for ({u},{v})") from None

    @classmethod
    def from_vector(cls, graph: FirmGraph, vector: np.ndarray) -> "MarginalSpec":
        values = [float(min(1.0, max(0.0, x))) for x in np.asarray(vector, dtype=float)]
        return cls(
            single=tuple(values[: graph.node_count]),
            pair=tuple(values[graph.node_count:]),
            edges=graph.edges,
        )


class CalibrationBackend(str, Enum):
    """Calibration solvers"""
    IPF = "ipf"
    MAXENT_GRADIENT = "maxent_gradient"


class CalibrationConfig(_Frozen):
    """Tolerance, budget and backend for calibration"""
    tolerance: float = Field(default_factory=lambda: settings.calibration_tolerance, gt=0)
    max_iterations: PositiveInt = Field(
        default_factory=lambda: settings.calibration_max_iterations
    )
    backend: CalibrationBackend = Field(
        default_factory=lambda: CalibrationBackend(settings.calibration_backend)
    )


# ============================================================================
# SECTOR MODEL AND MULTI-PERIOD CHAIN
# ============================================================================

class SectorParams(_Frozen):
    """Sector-homogeneous parameterization of the firm/sector graph"""
    sector_sizes: tuple[NonNegativeInt, ...]
    eta_S: tuple[FiniteFloat, ...]
    eta_F: tuple[FiniteFloat, ...]
    eta_FS: tuple[FiniteFloat, ...]
    # Upper triangle in (1,2), (1,3), ..., (S-1,S) order; empty means all zero.
    eta_sector_edge: tuple[FiniteFloat, ...] = ()

    @model_validator(mode="after")
    def _check_lengths(self) -> "SectorParams":
        count = len(self.sector_sizes)
        if count == 0:
            raise ValueError("at least one sector is required")
        for name in ("eta_S", "eta_F", "eta_FS"):
            if len(getattr(self, name)) != count:
                raise ValueError(f"{name} needs one entry per sector ({count})")
        pairs = count * (count - 1) // 2
        if self.eta_sector_edge and len(self.eta_sector_edge) != pairs:
            raise ValueError(f"eta_sector_edge needs {pairs} entries")
        return self

    @property
    def n_sectors(self) -> int:
        return len(self.sector_sizes)

    @property
    def n_firms(self) -> int:
        return int(sum(self.sector_sizes))

    def sector_pairs(self) -> list[tuple[int, int]]:
        """0-based sector index pairs in eta_sector_edge order."""
        return list(combinations(range(self.n_sectors), 2))

    def sector_edge_weights(self) -> np.ndarray:
        if not self.eta_sector_edge:
            return np.zeros(len(self.sector_pairs()))
        return np.asarray(self.eta_sector_edge, dtype=float)

    def sector_of_firm(self) -> np.ndarray:
        """0-based sector index of each firm; firms are laid out sector by sector."""
        return np.repeat(np.arange(self.n_sectors), self.sector_sizes)

    @classmethod
    def single(cls, n_firms: int, eta_S: float, eta_FS: float, eta_F: float) -> "SectorParams":
        return cls(
            sector_sizes=(n_firms,),
            eta_S=(eta_S,),
            eta_F=(eta_F,),
            eta_FS=(eta_FS,),
        )


class ChainSpec(_Frozen):
    """Single-sector multi-period model with geometric removal of defaulted firms"""
    n_firms: PositiveInt
    eta_S: FiniteFloat
    eta_FS: FiniteFloat
    eta_F: FiniteFloat
    removal_prob: float = Field(ge=0.0, le=1.0)
    # post_removal: the eta_S tilt uses the in-system count after removal;
    # pre_removal: the tilt uses the count before removal (the literal kernel).
    tilt: Literal["post_removal", "pre_removal"] = "post_removal"

    @property
    def params(self) -> SectorParams:
        return SectorParams.single(self.n_firms, self.eta_S, self.eta_FS, self.eta_F)


# ============================================================================
# PRICING
# ============================================================================

class TrancheSpec(_Frozen):
    """Loss layer [K_L, K_U] of a CDO"""
    attachment: float = Field(ge=0.0, le=1.0)
    detachment: float = Field(ge=0.0, le=1.0)
    label: str = ""

    @model_validator(mode="before")
    @classmethod
    def _default_label(cls, data):
        if isinstance(data, dict) and not data.get("label"):
            try:
                lower = float(data["attachment"]) * 100
                upper = float(data["detachment"]) * 100
            except (KeyError, TypeError, ValueError):
                return data
            data = {**data, "label": f"{lower:g}-{upper:g}"}
        return data

    @model_validator(mode="after")
    def _check_order(self) -> "TrancheSpec":
        if not self.attachment < self.detachment:
            raise ValueError("attachment must be below detachment")
        return self

    @property
    def width(self) -> float:
        return self.detachment - self.attachment


class CdoContract(_Frozen):
    """Payment schedule, discounting and tranche list"""
    notional: float = Field(default=1.0, gt=0)
    payment_times: tuple[float, ...]
    rate: Optional[FiniteFloat] = None
    discount_factors: Optional[tuple[float, ...]] = None
    tranches: tuple[TrancheSpec, ...] = ()

    @model_validator(mode="after")
    def _check_schedule(self) -> "CdoContract":
        times = np.asarray(self.payment_times, dtype=float)
        if times.size == 0:
            raise ValueError("at least one payment date is required")
        if times[0] <= 0 or np.any(np.diff(times) <= 0):
            raise ValueError("payment dates must be positive and strictly increasing")
        if times.size > 1:
            steps = np.diff(times)
            if not np.allclose(steps, steps[0], rtol=0, atol=1e-9):
                raise ValueError("payment period must be constant")
        if (self.rate is None) == (self.discount_factors is None):
            raise ValueError("give exactly one of rate or discount_factors")
        if self.discount_factors is not None:
            if len(self.discount_factors) != times.size:
                raise ValueError("one discount factor per payment date")
            if any(not 0.0 < b <= 1.0 for b in self.discount_factors):
                raise ValueError("discount factors must lie in (0, 1]")
        if self.rate is not None and self.rate < 0:
            raise ValueError("negative rates give discount factors above one")
        return self

    @property
    def period(self) -> float:
        """Payment period gamma."""
        if len(self.payment_times) > 1:
            return self.payment_times[1] - self.payment_times[0]
        return self.payment_times[0]

    @property
    def n_periods(self) -> int:
        return len(self.payment_times)

    def discounts(self) -> np.ndarray:
        """beta(t_0, t_k) for k = 1..K."""
        if self.discount_factors is not None:
            return np.asarray(self.discount_factors, dtype=float)
        return np.exp(-float(self.rate) * np.asarray(self.payment_times, dtype=float))

    @classmethod
    def regular(
        cls,
        maturity: float,
        frequency: float,
        rate: float,
        tranches: tuple[TrancheSpec, ...],
        notional: float = 1.0,
    ) -> "CdoContract":
        periods = int(round(maturity / frequency))
        return cls(
            notional=notional,
            payment_times=tuple(frequency * k for k in range(1, periods + 1)),
            rate=rate,
            tranches=tranches,
        )


# ============================================================================
# NORMAL COPULA
# ============================================================================

class CopulaSpec(_Frozen):
    """One-factor normal copula with exponential default times"""
    asset_correlation: float = Field(ge=0.0, lt=1.0)
    default_intensity: float = Field(gt=0.0)
    recovery: float = Field(default=0.4, ge=0.0, lt=1.0)
    n_firms: PositiveInt

    @classmethod
    def from_default_probability(
        cls,
        default_probability: float,
        asset_correlation: float,
        n_firms: int,
        recovery: float = 0.4,
        horizon: float = 1.0,
    ) -> "CopulaSpec":
        intensity = -math.log1p(-default_probability) / horizon
        return cls(
            asset_correlation=asset_correlation,
            default_intensity=intensity,
            recovery=recovery,
            n_firms=n_firms,
        )

    def default_probability(self, horizon: float) -> float:
        return -math.expm1(-self.default_intensity * horizon)


class SmileSearchConfig(_Frozen):
    """Rating class and search settings for the smile-correction fit"""
    name: str = "rating"
    one_year_default_prob: float = Field(gt=0.0, lt=1.0)
    asset_correlation: float = Field(ge=0.0, lt=1.0)
    recovery: float = Field(default=0.4, ge=0.0, lt=1.0)
    rate: float = 0.05
    n_firms: PositiveInt = 50
    maturity: float = Field(default=5.0, gt=0)
    frequency: float = Field(default=0.5, gt=0)
    n_paths: PositiveInt = 20_000
    seed: NonNegativeInt = Field(default_factory=lambda: settings.seed)
    # (eta_FS, eta_S, p_R)
    initial: tuple[float, float, float] = (-3.0, 4.0, 0.5)
    lower: tuple[float, float, float] = (-10.0, -20.0, 0.0)
    upper: tuple[float, float, float] = (10.0, 40.0, 1.0)
    max_evaluations: NonNegativeInt = 300
    restarts: NonNegativeInt = 3
    mezzanine_tolerance: float = Field(default=0.01, gt=0)
    penalty_weight: float = Field(default=1e4, gt=0)
    apply_lgd: bool = Field(default_factory=lambda: settings.apply_lgd)

    @model_validator(mode="after")
    def _check_bounds(self) -> "SmileSearchConfig":
        for lo, x0, hi in zip(self.lower, self.initial, self.upper):
            if not lo <= x0 <= hi:
                raise ValueError("initial point must lie inside the bounds")
        if not 0.0 <= self.lower[2] <= self.upper[2] <= 1.0:
            raise ValueError("removal probability bounds must lie in [0, 1]")
        return self

    @property
    def pinned(self) -> bool:
        """True when the search space is a single point."""
        return self.max_evaluations == 0 or all(
            lo == hi for lo, hi in zip(self.lower, self.upper)
        )
