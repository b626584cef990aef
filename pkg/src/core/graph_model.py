"""
Exact evaluation of the binary graphical (toric) default model.

States w in {0,1}^M are enumerated in binary order with w_1 the most
significant bit, so column j of the marginal map corresponds to the
bitstring of j written with M digits. Calibration and the CSV exports
index into this order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ..config import settings
from ..schemas import FirmGraph, MarginalSpec, ModelParams, SectorParams
from .exceptions import CapacityException, DomainException

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class JointDistribution:
    """Probabilities p_w over {0,1}^M and the log partition function."""
    node_count: int
    probabilities: np.ndarray
    log_partition: Optional[float] = None

    def __post_init__(self) -> None:
        p = self.probabilities
        if p.shape != (2 ** self.node_count,):
            raise DomainException("JointDistribution", "need 2^M probabilities")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainException("JointDistribution", "probabilities must be a distribution")
        p.setflags(write=False)

    @classmethod
    def from_probabilities(cls, probabilities) -> "JointDistribution":
        p = np.asarray(probabilities, dtype=float)
        node_count = int(round(np.log2(p.size))) if p.size else 0
        return cls(node_count=node_count, probabilities=p.copy())

    def bitstrings(self) -> list[str]:
        return [format(j, f"0{self.node_count}b") for j in range(self.probabilities.size)]

    def rows(self) -> list[tuple[str, float]]:
        return list(zip(self.bitstrings(), self.probabilities.tolist()))


@dataclass(frozen=True)
class MarginalMapMatrix:
    """The 0/1 matrix A_G with its row legend."""
    matrix: np.ndarray
    row_labels: tuple[str, ...]

    @property
    def statistics(self) -> np.ndarray:
        """Sufficient statistics, one row per state (A_G without the ones row, transposed)."""
        return self.matrix[:-1].T


def check_capacity(node_count: int, cap: Optional[int] = None) -> None:
    cap = settings.enumeration_cap if cap is None else cap
    if node_count > cap:
        raise CapacityException("state enumeration", node_count, cap)


def enumerate_states(node_count: int) -> np.ndarray:
    """All w in {0,1}^M as a (2^M, M) uint8 array, w_1 most significant."""
    index = np.arange(2 ** node_count, dtype=np.int64)
    shifts = np.arange(node_count - 1, -1, -1, dtype=np.int64)
    return ((index[:, None] >> shifts) & 1).astype(np.uint8)


def _check_params(graph: FirmGraph, params: ModelParams) -> None:
    if not params.matches(graph):
        raise DomainException(
            "graph model",
            f"parameters have {len(params.eta_node)} node and {len(params.eta_edge)} edge "
            f"weights, graph has {graph.node_count} nodes and {graph.edge_count} edges",
        )


def build_marginal_map(graph: FirmGraph, cap: Optional[int] = None) -> MarginalMapMatrix:
    """A_G: rows P_1..P_M, P_uv for each edge, then a row of ones."""
    check_capacity(graph.node_count, cap)
    states = enumerate_states(graph.node_count)
    edges = graph.edge_array()
    pair_rows = states[:, edges[:, 0]] & states[:, edges[:, 1]]
    ones = np.ones((states.shape[0], 1), dtype=np.uint8)
    matrix = np.hstack([states, pair_rows, ones]).T.copy()
    labels = (
        tuple(f"P_{i}" for i in range(1, graph.node_count + 1))
        + tuple(f"P_{u}{v}" if graph.node_count < 10 else f"P_{u},{v}" for u, v in graph.edges)
        + ("1",)
    )
    return MarginalMapMatrix(matrix=matrix, row_labels=labels)


def log_weights(
    graph: FirmGraph,
    params: ModelParams,
    marginal_map: Optional[MarginalMapMatrix] = None,
) -> np.ndarray:
    """Unnormalized log p_w: sum eta_i w_i + sum eta_uv w_u w_v."""
    _check_params(graph, params)
    marginal_map = marginal_map or build_marginal_map(graph)
    return marginal_map.statistics @ params.vector


def joint_distribution(
    graph: FirmGraph,
    params: ModelParams,
    marginal_map: Optional[MarginalMapMatrix] = None,
) -> JointDistribution:
    exponents = log_weights(graph, params, marginal_map)
    log_z = float(logsumexp(exponents))
    probabilities = np.exp(exponents - log_z)
    probabilities /= probabilities.sum()
    return JointDistribution(
        node_count=graph.node_count,
        probabilities=probabilities,
        log_partition=log_z,
    )


def marginals_from_params(
    graph: FirmGraph,
    params: ModelParams,
    marginal_map: Optional[MarginalMapMatrix] = None,
) -> MarginalSpec:
    marginal_map = marginal_map or build_marginal_map(graph)
    dist = joint_distribution(graph, params, marginal_map)
    values = marginal_map.matrix[:-1] @ dist.probabilities
    return MarginalSpec.from_vector(graph, values)


def correlation_from_marginals(p_u: float, p_v: float, p_uv: float) -> float:
    for p in (p_u, p_v):
        if not 0.0 < p < 1.0:
            raise DomainException("pairwise_correlation", f"degenerate marginal {p}")
    rho = (p_uv - p_u * p_v) / np.sqrt(p_u * (1 - p_u) * p_v * (1 - p_v))
    return float(np.clip(rho, -1.0, 1.0))


def pairwise_correlation(spec: MarginalSpec, u: int, v: int) -> float:
    """Linear correlation of the default indicators of nodes u and v (1-based)."""
    try:
        p_uv = spec.pair_for(u, v)
    except KeyError as exc:
        raise DomainException("pairwise_correlation", str(exc)) from None
    return correlation_from_marginals(spec.single[u - 1], spec.single[v - 1], p_uv)


def toric_relation_residual(dist: JointDistribution) -> float:
    """p000 p011 p101 p110 - p001 p010 p100 p111 for the triangle model."""
    if dist.node_count != 3:
        raise DomainException(
            "toric_relation_residual", f"needs the 3-node triangle, got M={dist.node_count}"
        )
    p = dist.probabilities
    return float(p[0] * p[3] * p[5] * p[6] - p[1] * p[2] * p[4] * p[7])


def entropy(dist: JointDistribution) -> float:
    p = dist.probabilities
    positive = p[p > 0]
    return float(-np.sum(positive * np.log(positive)))


def empirical_marginals(graph: FirmGraph, counts) -> MarginalSpec:
    """A_G . u / sum(u) for state counts u in binary order."""
    marginal_map = build_marginal_map(graph)
    u = np.asarray(counts, dtype=float)
    if u.shape != (2 ** graph.node_count,) or np.any(u < 0) or u.sum() <= 0:
        raise DomainException("empirical_marginals", "need 2^M nonnegative counts")
    return MarginalSpec.from_vector(graph, marginal_map.matrix[:-1] @ (u / u.sum()))


def sector_graph(params: SectorParams) -> tuple[FirmGraph, ModelParams]:
    """The sector model as an explicit graph on N firm nodes followed by S sector nodes."""
    n_firms = params.n_firms
    sectors = params.sector_of_firm()
    edges = [(i + 1, n_firms + int(s) + 1) for i, s in enumerate(sectors)]
    eta_edge = [params.eta_FS[int(s)] for s in sectors]
    for (a, b), weight in zip(params.sector_pairs(), params.sector_edge_weights()):
        edges.append((n_firms + a + 1, n_firms + b + 1))
        eta_edge.append(float(weight))
    labels = tuple(f"firm{i + 1}" for i in range(n_firms)) + tuple(
        f"sector{j + 1}" for j in range(params.n_sectors)
    )
    graph = FirmGraph(node_count=n_firms + params.n_sectors, edges=tuple(edges), labels=labels)
    eta_node = [params.eta_F[int(s)] for s in sectors] + list(params.eta_S)
    return graph, ModelParams(eta_node=tuple(eta_node), eta_edge=tuple(eta_edge))
