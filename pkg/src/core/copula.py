"""
One-factor normal copula comparator.

Asset values M_i = sqrt(rho_A) Y + sqrt(1 - rho_A) eps_i are mapped to
exponential default times percentile to percentile,
tau_i = -log(1 - Phi(M_i)) / lambda.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.integrate import quad
from scipy.optimize import bisect
from scipy.special import ndtr, owens_t
from scipy.stats import binom, norm

from ..config import settings
from ..schemas import CdoContract, CopulaSpec, TrancheSpec
from ..utils.rng import block_generator, path_blocks
from .exceptions import (
    BracketException,
    DegenerateTrancheException,
    DomainException,
    NumericException,
    RangeException,
    ToricCreditException,
)
from .pricing import BASIS_POINTS, tranche_loss
from .sector_loss import LossDistribution

logger = logging.getLogger(__name__)

_FACTOR_LIMIT = 38.0
_COUNT_CACHE_SIZE = 4


def _check_inputs(operation: str, rho_A: float, q: float) -> None:
    if not 0.0 <= rho_A < 1.0:
        raise DomainException(operation, f"rho_A={rho_A} outside [0, 1)")
    if not 0.0 < q < 1.0:
        raise DomainException(operation, f"q={q} outside (0, 1)")


def joint_default_probability(rho_A: float, q: float, tolerance: Optional[float] = None) -> float:
    """Pr(both of two firms default) by integrating over the common factor."""
    _check_inputs("joint_default_probability", rho_A, q)
    tolerance = settings.quadrature_tolerance if tolerance is None else tolerance
    if rho_A == 0.0:
        return q * q
    barrier = norm.ppf(q)
    scale = np.sqrt(1.0 - rho_A)
    loading = np.sqrt(rho_A)

    def integrand(y: float) -> float:
        return float(norm.pdf(y) * ndtr((barrier - loading * y) / scale) ** 2)

    kink = barrier / loading
    points = [kink] if -_FACTOR_LIMIT < kink < _FACTOR_LIMIT else None
    value, error = quad(
        integrand,
        -_FACTOR_LIMIT,
        _FACTOR_LIMIT,
        points=points,
        epsabs=tolerance * 0.1,
        epsrel=0.0,
        limit=500,
    )
    if error > tolerance:
        raise NumericException("joint_default_probability", f"quadrature error {error:.2e}")
    return float(value)


def bivariate_joint_default(rho_A: float, q: float) -> float:
    """Phi_2(K, K; rho_A) through Owen's T function."""
    _check_inputs("bivariate_joint_default", rho_A, q)
    barrier = norm.ppf(q)
    a = np.sqrt((1.0 - rho_A) / (1.0 + rho_A))
    return float(ndtr(barrier) - 2.0 * owens_t(barrier, a))


def default_correlation(rho_A: float, q: float, tolerance: Optional[float] = None) -> float:
    """Correlation of the default indicators implied by asset correlation rho_A."""
    joint = joint_default_probability(rho_A, q, tolerance)
    return (joint - q * q) / (q * (1.0 - q))


def asset_corr_from_default_corr(rho: float, q: float, upper: float = 0.9999) -> float:
    _check_inputs("asset_corr_from_default_corr", 0.0, q)
    if rho == 0.0:
        return 0.0

    def gap(rho_A: float) -> float:
        return default_correlation(rho_A, q) - rho

    high = gap(upper)
    if rho < 0.0 or high < 0.0:
        raise BracketException("asset_corr_from_default_corr", 0.0, upper)
    if high == 0.0:
        return upper
    return float(bisect(gap, 0.0, upper, xtol=1e-13, maxiter=200))


def copula_loss_distribution(rho_A: float, q: float, n_firms: int, nodes: int = 160) -> LossDistribution:
    """Finite-pool one-period default count: binomial conditional on the factor."""
    _check_inputs("copula_loss_distribution", rho_A, q)
    barrier = norm.ppf(q)
    y, weights = hermegauss(nodes)
    weights = weights / weights.sum()
    conditional = ndtr((barrier - np.sqrt(rho_A) * y) / np.sqrt(1.0 - rho_A))
    counts = np.arange(n_firms + 1)
    pmf = binom.pmf(counts[:, None], n_firms, conditional[None, :]) @ weights
    return LossDistribution.from_array(pmf)


# ============================================================================
# MONTE CARLO
# ============================================================================

@dataclass(frozen=True)
class DefaultTimes:
    """tau per path and firm; horizon is the date default indicators refer to."""
    times: np.ndarray
    horizon: float

    def indicators(self) -> np.ndarray:
        return self.times <= self.horizon

    def default_counts(self, dates: Sequence[float]) -> np.ndarray:
        """#{tau_i <= t} per path (rows) and date (columns)."""
        return np.stack([(self.times <= t).sum(axis=1) for t in dates], axis=1)


class CopulaScenarioSet:
    """
    Fixed factor and idiosyncratic draws, reused for every asset
    correlation so spreads are smooth in rho_A (common random numbers).
    """

    def __init__(
        self,
        spec: CopulaSpec,
        n_paths: int,
        seed: Optional[int] = None,
        block_size: Optional[int] = None,
    ) -> None:
        if n_paths < 1:
            raise DomainException("CopulaScenarioSet", "n_paths must be positive")
        self.spec = spec
        self.n_paths = n_paths
        self.seed = settings.seed if seed is None else seed
        factors = []
        idiosyncratic = []
        for block, _, size in path_blocks(n_paths, block_size):
            rng = block_generator(self.seed, block, stream=1)
            factors.append(rng.standard_normal(size))
            idiosyncratic.append(rng.standard_normal((size, spec.n_firms)))
        self._factor = np.concatenate(factors)
        self._idiosyncratic = np.concatenate(idiosyncratic, axis=0)
        # Default counts for the most recent correlations only.
        self.default_counts = lru_cache(maxsize=_COUNT_CACHE_SIZE)(self._default_counts)

    def default_times(self, rho_A: Optional[float] = None, horizon: float = 1.0) -> DefaultTimes:
        rho_A = self.spec.asset_correlation if rho_A is None else rho_A
        if not 0.0 <= rho_A < 1.0:
            raise DomainException("default_times", f"rho_A={rho_A} outside [0, 1)")
        assets = np.sqrt(rho_A) * self._factor[:, None] + np.sqrt(1.0 - rho_A) * self._idiosyncratic
        times = -norm.logsf(assets) / self.spec.default_intensity
        return DefaultTimes(times=times, horizon=horizon)

    def _default_counts(self, rho_A: float, dates: tuple[float, ...]) -> np.ndarray:
        counts = self.default_times(rho_A).default_counts(dates)
        counts.setflags(write=False)
        return counts

    def _loss_fractions(self, rho_A: float, dates: tuple[float, ...]) -> np.ndarray:
        return (1.0 - self.spec.recovery) * self.default_counts(rho_A, dates) / self.spec.n_firms

    def tranche_quotes(
        self,
        contract: CdoContract,
        rho_A: Optional[float] = None,
        tranches: Optional[Sequence[TrancheSpec]] = None,
    ) -> list["CopulaQuote"]:
        rho_A = self.spec.asset_correlation if rho_A is None else rho_A
        losses = self._loss_fractions(rho_A, tuple(contract.payment_times))
        discounts = contract.discounts()
        quotes = []
        for tranche in tranches or contract.tranches:
            layer = tranche_loss(losses, tranche)
            previous = np.hstack([np.zeros((layer.shape[0], 1)), layer[:, :-1]])
            premium = contract.notional * contract.period * (tranche.width - layer) @ discounts
            protection = contract.notional * (layer - previous) @ discounts
            quotes.append(_ratio_estimate(tranche, protection, premium))
        return quotes


@dataclass(frozen=True)
class CopulaQuote:
    label: str
    spread: float
    stderr: float

    @property
    def spread_bps(self) -> float:
        return self.spread * BASIS_POINTS

    @property
    def stderr_bps(self) -> float:
        return self.stderr * BASIS_POINTS


def _ratio_estimate(tranche: TrancheSpec, protection: np.ndarray, premium: np.ndarray) -> CopulaQuote:
    """Ratio of means with a delta-method standard error."""
    mean_premium = float(premium.mean())
    if mean_premium <= 0.0:
        raise DegenerateTrancheException(tranche.label)
    spread = float(protection.mean()) / mean_premium
    n = protection.size
    if n < 2:
        return CopulaQuote(tranche.label, spread, float("nan"))
    residual = protection - spread * premium
    stderr = float(np.sqrt(residual.var(ddof=1) / n) / mean_premium)
    return CopulaQuote(tranche.label, spread, stderr)


def simulate_default_times(
    spec: CopulaSpec,
    horizon: float,
    n_paths: int,
    seed: Optional[int] = None,
) -> DefaultTimes:
    return CopulaScenarioSet(spec, n_paths, seed).default_times(horizon=horizon)


def mc_tranche_spreads(
    spec: CopulaSpec,
    contract: CdoContract,
    n_paths: int,
    seed: Optional[int] = None,
) -> list[CopulaQuote]:
    quotes = CopulaScenarioSet(spec, n_paths, seed).tranche_quotes(contract)
    logger.info(
        "Copula spreads at rho_A=%.4f over %d paths: %s",
        spec.asset_correlation,
        n_paths,
        ", ".join(f"{q.label}={q.spread_bps:.1f}bp" for q in quotes),
    )
    return quotes


# ============================================================================
# IMPLIED CORRELATION
# ============================================================================

@dataclass(frozen=True)
class ImpliedCorrelationRow:
    label: str
    observed_spread: float
    implied_rho_A: Optional[float]
    status: str


def implied_correlation(
    observed_spread: float,
    tranche: TrancheSpec,
    contract: CdoContract,
    scenarios: CopulaScenarioSet,
    grid_points: int = 34,
    upper: float = 0.99,
    tolerance: Optional[float] = None,
) -> float:
    """
    Asset correlation at which the copula reprices the tranche. The first
    sign change on a grid over [0, upper] is refined by bisection.
    """
    tolerance = settings.implied_corr_tolerance if tolerance is None else tolerance

    def gap(rho_A: float) -> float:
        return scenarios.tranche_quotes(contract, rho_A, (tranche,))[0].spread - observed_spread

    grid = np.linspace(0.0, upper, grid_points)
    values = np.array([gap(r) for r in grid])
    for i in range(grid.size):
        if values[i] == 0.0:
            return float(grid[i])
        if i + 1 < grid.size and np.sign(values[i]) != np.sign(values[i + 1]):
            return float(bisect(gap, grid[i], grid[i + 1], xtol=tolerance))
    spreads = values + observed_spread
    raise RangeException(
        f"implied_correlation[{tranche.label}]",
        observed_spread,
        (float(spreads.min()), float(spreads.max())),
    )


def implied_correlation_report(
    observed: Mapping[str, float],
    contract: CdoContract,
    scenarios: CopulaScenarioSet,
) -> list[ImpliedCorrelationRow]:
    """Implied rho_A per tranche; tranches that cannot be matched are reported, not raised."""
    rows = []
    for tranche in contract.tranches:
        if tranche.label not in observed:
            continue
        spread = observed[tranche.label]
        try:
            rho_A = implied_correlation(spread, tranche, contract, scenarios)
            rows.append(ImpliedCorrelationRow(tranche.label, spread, rho_A, "ok"))
        except ToricCreditException as exc:
            logger.warning("No implied correlation for %s: %s", tranche.label, exc.message)
            rows.append(ImpliedCorrelationRow(tranche.label, spread, None, exc.message))
    return rows
