"""
Sector-homogeneous one-period model.

Every firm in sector j shares the node weight eta_F[j] and the edge weight
eta_FS[j] to its sector node. Conditional on the sector-node state vector
s in {0,1}^S the firms are independent, so the number of defaults in a
sector is Binomial(N_j, expit(eta_F[j] + s_j eta_FS[j])) and the portfolio
loss is a 2^S-component mixture of convolutions of those binomials.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import bisect, brentq
from scipy.special import expit, logsumexp
from scipy.stats import binom

from ..config import settings
from ..schemas import SectorParams
from .exceptions import BracketException, CapacityException, DomainException, ToricCreditException
from .graph_model import correlation_from_marginals, enumerate_states

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossDistribution:
    """Pr(number of defaults = n) for n = 0..N."""
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = self.probabilities
        if p.ndim != 1 or p.size == 0:
            raise DomainException("LossDistribution", "need a 1-d probability vector")
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-9:
            raise DomainException("LossDistribution", f"probabilities sum to {p.sum():.12g}")
        p.setflags(write=False)

    @classmethod
    def from_array(cls, values) -> "LossDistribution":
        p = np.clip(np.asarray(values, dtype=float), 0.0, None)
        return cls(probabilities=p / p.sum())

    @classmethod
    def point_mass(cls, size: int, at: int = 0) -> "LossDistribution":
        p = np.zeros(size)
        p[at] = 1.0
        return cls(probabilities=p)

    @property
    def max_count(self) -> int:
        return self.probabilities.size - 1

    def mean(self) -> float:
        return float(np.arange(self.probabilities.size) @ self.probabilities)

    def tail(self, threshold: int) -> float:
        """Pr(n >= threshold)."""
        return float(self.probabilities[max(threshold, 0):].sum())

    def rows(self) -> list[tuple[int, float]]:
        return list(enumerate(self.probabilities.tolist()))


@dataclass(frozen=True)
class BinomialMixture:
    """Y B1 + (1 - Y) B2 with Y ~ Bernoulli(y_weight)."""
    y_weight: float
    p_with_sector: float
    p_without_sector: float
    trials: int

    def pmf(self) -> np.ndarray:
        n = np.arange(self.trials + 1)
        return self.y_weight * binom.pmf(n, self.trials, self.p_with_sector) + (
            1.0 - self.y_weight
        ) * binom.pmf(n, self.trials, self.p_without_sector)

    def distribution(self) -> LossDistribution:
        return LossDistribution.from_array(self.pmf())


@dataclass(frozen=True)
class SurfacePoint:
    eta_S: float
    eta_FS: float
    eta_F_star: Optional[float]
    rho: Optional[float]
    error: Optional[str] = None


def _sector_states(params: SectorParams) -> np.ndarray:
    if params.n_sectors > settings.sector_cap:
        raise CapacityException("sector states", params.n_sectors, settings.sector_cap)
    return enumerate_states(params.n_sectors).astype(float)


def _sector_state_terms(params: SectorParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sector states, the per-state log weight of the sector nodes, and firm logits."""
    states = _sector_states(params)
    eta_S = np.asarray(params.eta_S, dtype=float)
    eta_F = np.asarray(params.eta_F, dtype=float)
    eta_FS = np.asarray(params.eta_FS, dtype=float)
    log_weight = states @ eta_S
    for (a, b), weight in zip(params.sector_pairs(), params.sector_edge_weights()):
        log_weight = log_weight + weight * states[:, a] * states[:, b]
    logits = eta_F[None, :] + states * eta_FS[None, :]
    return states, log_weight, logits


def _log_mixture_weights(params: SectorParams) -> tuple[np.ndarray, np.ndarray, float]:
    states, log_weight, logits = _sector_state_terms(params)
    sizes = np.asarray(params.sector_sizes, dtype=float)
    log_mass = log_weight + (np.logaddexp(0.0, logits) * sizes[None, :]).sum(axis=1)
    log_z = float(logsumexp(log_mass))
    return log_mass - log_z, logits, log_z


def log_partition(params: SectorParams) -> float:
    """log Z_S of the sector model."""
    return _log_mixture_weights(params)[2]


def firm_joint_probability(params: SectorParams, x: Sequence[int]) -> float:
    """Probability of the firm default vector x, firms laid out sector by sector."""
    x = np.asarray(x, dtype=int)
    if x.shape != (params.n_firms,) or np.any((x != 0) & (x != 1)):
        raise DomainException("firm_joint_probability", f"need a 0/1 vector of length {params.n_firms}")
    counts = np.bincount(params.sector_of_firm(), weights=x, minlength=params.n_sectors)
    _, log_weight, logits = _sector_state_terms(params)
    log_terms = log_weight + logits @ counts
    return float(np.exp(logsumexp(log_terms) - log_partition(params)))


def loss_distribution(params: SectorParams) -> LossDistribution:
    log_mix, logits, _ = _log_mixture_weights(params)
    total = np.zeros(params.n_firms + 1)
    for log_w, state_logits in zip(log_mix, logits):
        weight = np.exp(log_w)
        if weight == 0.0:
            continue
        pmf = np.ones(1)
        for size, logit in zip(params.sector_sizes, state_logits):
            pmf = np.convolve(pmf, binom.pmf(np.arange(size + 1), size, expit(logit)))
        total += weight * pmf
    logger.debug(
        "Loss distribution over %d firms from %d sector states", params.n_firms, log_mix.size
    )
    return LossDistribution.from_array(total)


def single_sector_pmf(n_firms: int, eta_S: float, eta_FS: float, eta_F: float) -> np.ndarray:
    """Loss PMF of the one-sector model, the P~ of the multi-period kernel."""
    return binomial_decomposition(SectorParams.single(n_firms, eta_S, eta_FS, eta_F)).pmf()


def _require_single_sector(params: SectorParams, operation: str) -> None:
    if params.n_sectors != 1:
        raise DomainException(operation, f"needs one sector, got S={params.n_sectors}")


def binomial_decomposition(params: SectorParams) -> BinomialMixture:
    _require_single_sector(params, "binomial_decomposition")
    n = params.sector_sizes[0]
    eta_S, eta_F, eta_FS = params.eta_S[0], params.eta_F[0], params.eta_FS[0]
    log_with = eta_S + n * np.logaddexp(0.0, eta_F + eta_FS)
    log_without = n * np.logaddexp(0.0, eta_F)
    return BinomialMixture(
        y_weight=float(expit(log_with - log_without)),
        p_with_sector=float(expit(eta_F + eta_FS)),
        p_without_sector=float(expit(eta_F)),
        trials=n,
    )


def pair_marginals_single_sector(params: SectorParams) -> tuple[float, float]:
    """(P_1, P_12) of two firms in a one-sector model."""
    mixture = binomial_decomposition(params)
    y, a, b = mixture.y_weight, mixture.p_with_sector, mixture.p_without_sector
    return y * a + (1 - y) * b, y * a * a + (1 - y) * b * b


def pair_correlation_single_sector(params: SectorParams) -> float:
    """
    Default correlation of two firms in a one-sector model.

    With X_i = Y R_i + (1 - Y) U_i the covariance is Var(Y) E[V]^2 for
    V = R_i - U_i, and the variance of each X_i is P(1 - P).
    """
    _require_single_sector(params, "pair_correlation_single_sector")
    if params.sector_sizes[0] < 2:
        raise DomainException("pair_correlation_single_sector", "needs at least two firms")
    mixture = binomial_decomposition(params)
    y = mixture.y_weight
    mean_v = mixture.p_with_sector - mixture.p_without_sector
    p = y * mixture.p_with_sector + (1 - y) * mixture.p_without_sector
    if not 0.0 < p < 1.0:
        raise DomainException("pair_correlation_single_sector", f"degenerate marginal {p}")
    covariance = y * (1 - y) * mean_v ** 2
    return float(covariance / (p * (1 - p)))


def pair_correlation_from_marginals(params: SectorParams) -> float:
    """Same quantity through the pairwise-correlation formula on exact marginals."""
    p1, p12 = pair_marginals_single_sector(params)
    return correlation_from_marginals(p1, p1, p12)


# ============================================================================
# SINGLE-SECTOR ROOT FINDING
# ============================================================================

def _log_abs_one_minus_exp(u: float) -> tuple[float, float]:
    """(sign, log|1 - e^u|)."""
    if u == 0.0:
        return 0.0, -np.inf
    if u < 0.0:
        return 1.0, float(np.log(-np.expm1(u)))
    return -1.0, float(np.log(np.expm1(u)))


def _marginal_equation(x: float, q: float, n_firms: int, eta_S: float, eta_FS: float) -> float:
    """
    g(e^x) + e^eta_S g(e^(eta_FS + x)) with g(y) = (1 - (1-q)/q y)(1+y)^(N-1),
    rescaled by its largest term so only the sign and relative size matter.
    """
    log_c = np.log1p(-q) - np.log(q)
    s1, l1 = _log_abs_one_minus_exp(log_c + x)
    s2, l2 = _log_abs_one_minus_exp(log_c + x + eta_FS)
    l1 += (n_firms - 1) * np.logaddexp(0.0, x)
    l2 += eta_S + (n_firms - 1) * np.logaddexp(0.0, x + eta_FS)
    top = max(l1, l2)
    if not np.isfinite(top):
        return 0.0
    return float(s1 * np.exp(l1 - top) + s2 * np.exp(l2 - top))


def solve_eta_F(
    q: float,
    n_firms: int,
    eta_S: float,
    eta_FS: float,
    bracket: Optional[tuple[float, float]] = None,
    tolerance: Optional[float] = None,
) -> float:
    """Firm weight eta_F giving every firm of a one-sector model default probability q."""
    if not 0.0 < q < 1.0:
        raise DomainException("solve_eta_F", f"q={q} outside (0, 1)")
    if n_firms < 1:
        raise DomainException("solve_eta_F", "needs at least one firm")
    lower, upper = bracket or settings.eta_f_bracket
    tolerance = settings.eta_f_tolerance if tolerance is None else tolerance

    def f(x: float) -> float:
        return _marginal_equation(x, q, n_firms, eta_S, eta_FS)

    f_lower, f_upper = f(lower), f(upper)
    if f_lower == 0.0:
        return float(lower)
    if f_upper == 0.0:
        return float(upper)
    if np.sign(f_lower) == np.sign(f_upper):
        raise BracketException("solve_eta_F", lower, upper)
    eta_F = bisect(f, lower, upper, xtol=tolerance, maxiter=500)
    logger.debug("eta_F*=%.10f for q=%g, N=%d, eta_S=%g, eta_FS=%g", eta_F, q, n_firms, eta_S, eta_FS)
    return float(eta_F)


def single_sector_correlation(q: float, n_firms: int, eta_S: float, eta_FS: float) -> tuple[float, float]:
    """(eta_F*, rho) of the one-sector model calibrated to marginal q."""
    eta_F = solve_eta_F(q, n_firms, eta_S, eta_FS)
    rho = pair_correlation_single_sector(SectorParams.single(n_firms, eta_S, eta_FS, eta_F))
    return eta_F, rho


def solve_sector_correlation(
    q: float,
    rho: float,
    n_firms: int,
    eta_FS: float,
    eta_S_hint: float = 15.0,
    eta_S_grid: Optional[Sequence[float]] = None,
) -> tuple[float, float]:
    """
    Find (eta_S, eta_F) so the one-sector model has marginal q and pairwise
    correlation rho at the given eta_FS. The correlation is not monotone
    in eta_S, so every bracketed root on the grid is solved and the one
    nearest eta_S_hint is returned.
    """
    grid = np.asarray(
        eta_S_grid if eta_S_grid is not None else np.linspace(-20.0, 40.0, 241), dtype=float
    )

    def gap(eta_S: float) -> float:
        return single_sector_correlation(q, n_firms, eta_S, eta_FS)[1] - rho

    values = np.array([gap(s) for s in grid])
    roots = []
    for i in range(grid.size - 1):
        if values[i] == 0.0:
            roots.append(float(grid[i]))
        elif np.sign(values[i]) != np.sign(values[i + 1]):
            roots.append(float(brentq(gap, grid[i], grid[i + 1], xtol=1e-12)))
    if values[-1] == 0.0:
        roots.append(float(grid[-1]))
    if not roots:
        raise BracketException("solve_sector_correlation", float(grid[0]), float(grid[-1]))
    eta_S = min(roots, key=lambda s: abs(s - eta_S_hint))
    return eta_S, solve_eta_F(q, n_firms, eta_S, eta_FS)


# ============================================================================
# CORRELATION SURFACE
# ============================================================================

def _surface_point(q: float, n_firms: int, eta_S: float, eta_FS: float) -> SurfacePoint:
    try:
        eta_F = solve_eta_F(q, n_firms, eta_S, eta_FS)
        rho = pair_correlation_single_sector(SectorParams.single(n_firms, eta_S, eta_FS, eta_F))
    except ToricCreditException as exc:
        logger.warning("Grid point (eta_S=%g, eta_FS=%g) failed: %s", eta_S, eta_FS, exc.message)
        return SurfacePoint(eta_S, eta_FS, None, None, exc.message)
    return SurfacePoint(eta_S, eta_FS, eta_F, rho)


def correlation_surface(
    q: float,
    n_firms: int,
    eta_S_grid: Iterable[float],
    eta_FS_grid: Iterable[float],
    threads: Optional[int] = None,
) -> list[SurfacePoint]:
    """
    Pairwise correlation over an (eta_S, eta_FS) grid with eta_F re-solved
    at every point so the single-firm default probability stays q.

    Rows come back in eta_S-major order whatever the thread count.
    """
    if not 0.0 < q < 1.0:
        raise DomainException("correlation_surface", f"q={q} outside (0, 1)")
    eta_S_values = [float(s) for s in eta_S_grid]
    eta_FS_values = [float(fs) for fs in eta_FS_grid]
    grid = [(s, fs) for s in eta_S_values for fs in eta_FS_values]
    workers = threads or settings.threads
    logger.info("Correlation surface: %d points on %d thread(s)", len(grid), workers)
    if workers == 1:
        return [_surface_point(q, n_firms, s, fs) for s, fs in grid]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda point: _surface_point(q, n_firms, *point), grid))
