# src/services/calibration_service.py
"""
Calibration of graph-model parameters to target marginals.

Two interchangeable backends solve the maximum-entropy problem: iterative
proportional fitting (the reference) and a Newton-type ascent on the
concave log-likelihood. Both start from eta = 0. Targets are screened
against the marginal polytope first, since only interior points have a
finite solution.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize, root
from scipy.special import logit

from ..config import settings
from ..core.exceptions import (
    BudgetException,
    ConvergenceException,
    DomainException,
    NumericException,
)
from ..core.graph_model import (
    MarginalMapMatrix,
    build_marginal_map,
    empirical_marginals,
    joint_distribution,
)
from ..schemas import (
    CalibrationBackend,
    CalibrationConfig,
    FirmGraph,
    MarginalSpec,
    ModelParams,
)

logger = logging.getLogger(__name__)


class Membership(str, Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class CalibrationResult:
    params: ModelParams
    achieved: MarginalSpec
    iterations: int
    residual: float


@dataclass(frozen=True)
class PolytopeInequality:
    """sum(coefficients . P) <= bound, over the M + |E| marginal coordinates."""
    coefficients: tuple[float, ...]
    bound: float
    text: str

    def slack(self, values: np.ndarray) -> float:
        return float(self.bound - np.dot(self.coefficients, values))


# ============================================================================
# MARGINAL POLYTOPE
# ============================================================================

def polytope_inequalities(graph: FirmGraph) -> list[PolytopeInequality]:
    """
    Valid inequalities for the pairwise marginal polytope: four per edge
    and four per triangle. For the triangle graph this is the full
    16-inequality description.
    """
    dim = graph.dimension
    m = graph.node_count

    def make(terms: dict[int, float], bound: float, text: str) -> PolytopeInequality:
        coefficients = np.zeros(dim)
        for index, value in terms.items():
            coefficients[index] += value
        return PolytopeInequality(tuple(coefficients.tolist()), bound, text)

    found: list[PolytopeInequality] = []
    for e, (u, v) in enumerate(graph.edges):
        pu, pv, puv = u - 1, v - 1, m + e
        found.append(make({puv: -1.0}, 0.0, f"P_{u}{v} >= 0"))
        found.append(make({puv: 1.0, pu: -1.0}, 0.0, f"P_{u}{v} <= P_{u}"))
        found.append(make({puv: 1.0, pv: -1.0}, 0.0, f"P_{u}{v} <= P_{v}"))
        found.append(make({pu: 1.0, pv: 1.0, puv: -1.0}, 1.0, f"P_{u} + P_{v} <= P_{u}{v} + 1"))
    for a, b, c in graph.triangles():
        ab = m + graph.edge_index(a, b)
        ac = m + graph.edge_index(a, c)
        bc = m + graph.edge_index(b, c)
        found.append(
            make(
                {a - 1: 1.0, b - 1: 1.0, c - 1: 1.0, ab: -1.0, ac: -1.0, bc: -1.0},
                1.0,
                f"P_{a} + P_{b} + P_{c} <= P_{a}{b} + P_{a}{c} + P_{b}{c} + 1",
            )
        )
        # P_xy + P_xz <= P_x + P_yz, slack only at the vertices {x} and {y, z}.
        for x, (yz, xy, xz, label) in {
            a: (bc, ab, ac, f"P_{a}{b} + P_{a}{c} <= P_{a} + P_{b}{c}"),
            b: (ac, ab, bc, f"P_{a}{b} + P_{b}{c} <= P_{b} + P_{a}{c}"),
            c: (ab, ac, bc, f"P_{a}{c} + P_{b}{c} <= P_{c} + P_{a}{b}"),
        }.items():
            found.append(make({xy: 1.0, xz: 1.0, x - 1: -1.0, yz: -1.0}, 0.0, label))
    return found


def _target_vector(graph: FirmGraph, target: MarginalSpec) -> np.ndarray:
    if len(target.single) != graph.node_count or tuple(target.edges) != graph.edges:
        raise DomainException("calibration", "target marginals do not match the graph")
    return target.vector


def membership(
    graph: FirmGraph,
    target: MarginalSpec,
    tolerance: Optional[float] = None,
    marginal_map: Optional[MarginalMapMatrix] = None,
) -> Membership:
    """
    Decide whether the target lies inside the marginal polytope by
    maximizing the smallest elementary probability t subject to
    A_G p = (P, 1), p >= t.

    Each cell is written p_w = s_w + t with s_w >= 0, so the program has
    one sparse equality block and no per-state inequality rows.
    """
    tolerance = settings.membership_tolerance if tolerance is None else tolerance
    values = _target_vector(graph, target)
    marginal_map = marginal_map or build_marginal_map(graph)
    a_eq = sparse.csr_matrix(marginal_map.matrix, dtype=float)
    n_states = a_eq.shape[1]
    # Column for t: A_G applied to the all-ones vector.
    t_column = sparse.csr_matrix(np.asarray(a_eq.sum(axis=1), dtype=float))
    cost = np.zeros(n_states + 1)
    cost[-1] = -1.0
    result = linprog(
        cost,
        A_eq=sparse.hstack([a_eq, t_column], format="csc"),
        b_eq=np.append(values, 1.0),
        bounds=(0, None),
        method="highs",
    )
    if result.status == 2:
        return Membership.OUTSIDE
    if not result.success:
        raise NumericException("membership", result.message)
    t = float(result.x[-1])
    logger.debug("Membership LP: largest minimal cell probability %.3e", t)
    return Membership.INTERIOR if t > tolerance else Membership.BOUNDARY


def _violated_direction(graph: FirmGraph, values: np.ndarray, status: Membership) -> str:
    inequalities = polytope_inequalities(graph)
    if not inequalities:
        if np.any(values <= 0) or np.any(values >= 1):
            return "node marginals must lie strictly inside (0, 1)"
        return "no pairwise inequality applies"
    slacks = [(ineq.slack(values), ineq.text) for ineq in inequalities]
    worst_slack, worst_text = min(slacks)
    if status is Membership.OUTSIDE and worst_slack >= 0:
        return "violates a higher-order facet of the marginal polytope"
    verb = "violates" if worst_slack < 0 else "is tight on"
    return f"{verb} {worst_text} (slack {worst_slack:.3g})"


# ============================================================================
# BACKENDS
# ============================================================================

def _residual(marginal_map: MarginalMapMatrix, probabilities: np.ndarray, values: np.ndarray) -> float:
    return float(np.max(np.abs(marginal_map.matrix[:-1] @ probabilities - values)))


class BaseCalibrationBackend(ABC):
    """Abstract base class for calibration solvers"""

    @abstractmethod
    def solve(
        self,
        graph: FirmGraph,
        values: np.ndarray,
        config: CalibrationConfig,
        marginal_map: MarginalMapMatrix,
        on_iterate: Optional[Callable[[np.ndarray], None]] = None,
    ) -> tuple[np.ndarray, int, float]:
        """Return (eta vector, iterations, residual)"""
        pass


class IPFBackend(BaseCalibrationBackend):
    """Iterative proportional fitting over node and edge marginals"""

    def solve(self, graph, values, config, marginal_map, on_iterate=None):
        statistics = marginal_map.statistics.astype(bool)
        eta = np.zeros(graph.dimension)
        target_logit = logit(values)
        exponents = np.zeros(statistics.shape[0])
        for iteration in range(1, config.max_iterations + 1):
            # One sweep rescales every feature in turn; the update
            # eta_k += logit(target_k) - logit(current_k) matches feature k exactly.
            for k in range(graph.dimension):
                weights = np.exp(exponents - exponents.max())
                current = weights[statistics[:, k]].sum() / weights.sum()
                step = float(target_logit[k] - logit(current))
                eta[k] += step
                exponents[statistics[:, k]] += step
            probabilities = np.exp(exponents - exponents.max())
            probabilities /= probabilities.sum()
            if on_iterate is not None:
                on_iterate(eta.copy())
            residual = _residual(marginal_map, probabilities, values)
            logger.debug("IPF sweep %d: residual %.3e", iteration, residual)
            if residual <= config.tolerance:
                return eta, iteration, residual
        raise BudgetException("IPF", config.max_iterations, residual)


class GradientBackend(BaseCalibrationBackend):
    """Trust-region Newton ascent on the log-likelihood, polished by a root solve"""

    def solve(self, graph, values, config, marginal_map, on_iterate=None):
        statistics = marginal_map.statistics.astype(float)

        def moments(eta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
            exponents = statistics @ eta
            shift = exponents.max()
            weights = np.exp(exponents - shift)
            z = weights.sum()
            p = weights / z
            mean = statistics.T @ p
            centered = statistics - mean
            covariance = centered.T @ (centered * p[:, None])
            return float(np.log(z) + shift), mean, covariance

        def objective(eta):
            log_z, _, _ = moments(eta)
            return log_z - values @ eta

        def gradient(eta):
            return moments(eta)[1] - values

        def hessian(eta):
            return moments(eta)[2]

        callback = (lambda eta: on_iterate(np.asarray(eta).copy())) if on_iterate else None
        result = minimize(
            objective,
            np.zeros(graph.dimension),
            jac=gradient,
            hess=hessian,
            method="trust-exact",
            options={"maxiter": config.max_iterations, "gtol": config.tolerance * 1e-2},
            callback=callback,
        )
        eta = result.x
        iterations = int(result.nit)
        residual = float(np.max(np.abs(gradient(eta))))
        if residual > config.tolerance:
            polished = root(gradient, eta, jac=hessian, method="hybr", options={"xtol": 1e-14})
            candidate = float(np.max(np.abs(gradient(polished.x))))
            iterations += int(polished.nfev)
            if candidate < residual:
                eta, residual = polished.x, candidate
        logger.debug("Gradient backend: %d iterations, residual %.3e", iterations, residual)
        if residual > config.tolerance:
            raise BudgetException("maxent_gradient", iterations, residual)
        return eta, iterations, residual


class CalibrationBackendFactory:
    """Factory for creating calibration backends"""

    @staticmethod
    def create(backend: CalibrationBackend) -> BaseCalibrationBackend:
        if backend is CalibrationBackend.IPF:
            return IPFBackend()
        elif backend is CalibrationBackend.MAXENT_GRADIENT:
            return GradientBackend()
        else:
            raise ValueError(f"Unsupported calibration backend: {backend}")


_backends: dict[CalibrationBackend, BaseCalibrationBackend] = {}


def get_calibration_backend(backend: Optional[CalibrationBackend] = None) -> BaseCalibrationBackend:
    """Get calibration backend instance (one per kind)"""
    backend = backend or CalibrationBackend(settings.calibration_backend)
    if backend not in _backends:
        _backends[backend] = CalibrationBackendFactory.create(backend)
    return _backends[backend]


# ============================================================================
# OPERATIONS
# ============================================================================

def fit(
    graph: FirmGraph,
    target: MarginalSpec,
    config: Optional[CalibrationConfig] = None,
    on_iterate: Optional[Callable[[np.ndarray], None]] = None,
) -> CalibrationResult:
    """Find the unique eta whose marginals equal the target."""
    config = config or CalibrationConfig()
    marginal_map = build_marginal_map(graph)
    values = _target_vector(graph, target)
    status = membership(graph, target, marginal_map=marginal_map)
    if status is not Membership.INTERIOR:
        raise ConvergenceException(status.value, _violated_direction(graph, values, status))

    backend = get_calibration_backend(config.backend)
    eta, iterations, residual = backend.solve(graph, values, config, marginal_map, on_iterate)
    params = ModelParams.from_vector(graph, eta)
    dist = joint_distribution(graph, params, marginal_map)
    achieved = MarginalSpec.from_vector(graph, marginal_map.matrix[:-1] @ dist.probabilities)
    logger.info(
        "Calibrated %d parameters with %s in %d iterations (residual %.2e)",
        graph.dimension,
        config.backend.value,
        iterations,
        residual,
    )
    return CalibrationResult(params=params, achieved=achieved, iterations=iterations, residual=residual)


def fit_counts(
    graph: FirmGraph,
    counts: Sequence[float],
    config: Optional[CalibrationConfig] = None,
) -> CalibrationResult:
    """Maximum-likelihood parameters for observed state counts."""
    return fit(graph, empirical_marginals(graph, counts), config)


def log_likelihood(graph: FirmGraph, params: ModelParams, counts: Sequence[float]) -> float:
    u = np.asarray(counts, dtype=float)
    if u.shape != (2 ** graph.node_count,) or np.any(u < 0):
        raise DomainException("log_likelihood", "need 2^M nonnegative counts")
    dist = joint_distribution(graph, params)
    log_p = np.log(dist.probabilities)
    observed = u > 0
    return float(u[observed] @ log_p[observed])

