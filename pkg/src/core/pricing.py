"""
CDO tranche legs and spreads from a discrete loss term structure.

Legs are evaluated literally: no accrual on default, no day counts, the
premium paid on the outstanding tranche notional at each payment date.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..schemas import CdoContract, TrancheSpec
from .exceptions import DegenerateTrancheException, DomainException
from .multiperiod import TransitionMatrix
from .sector_loss import LossDistribution

logger = logging.getLogger(__name__)

BASIS_POINTS = 1e4


def tranche_loss(c, tranche: TrancheSpec):
    """min(c, K_U) - min(c, K_L); accepts scalars or arrays."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0) or np.any(c > 1):
        raise DomainException("tranche_loss", "loss fraction outside [0, 1]")
    loss = np.minimum(c, tranche.detachment) - np.minimum(c, tranche.attachment)
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True)
class LossTermStructure:
    """
    Distribution of the portfolio loss fraction at t_0..t_K on a common
    support; row k holds Pr(C_{t_k} = support[j]).
    """
    support: np.ndarray
    probabilities: np.ndarray
    lgd: float = 1.0

    def __post_init__(self) -> None:
        if self.probabilities.ndim != 2 or self.probabilities.shape[1] != self.support.size:
            raise DomainException("LossTermStructure", "one probability column per support point")
        if not np.allclose(self.probabilities.sum(axis=1), 1.0, atol=1e-9):
            raise DomainException("LossTermStructure", "each slice must sum to one")
        if np.any(self.support < 0) or np.any(self.support > 1):
            raise DomainException("LossTermStructure", "support must lie in [0, 1]")
        if not 0.0 < self.lgd <= 1.0:
            raise DomainException("LossTermStructure", "loss given default must lie in (0, 1]")

    @property
    def n_periods(self) -> int:
        return self.probabilities.shape[0] - 1

    @property
    def loss_fractions(self) -> np.ndarray:
        return self.lgd * self.support

    def expected_tranche_loss(self, tranche: TrancheSpec) -> np.ndarray:
        """E[C_l,t_k] for k = 0..K."""
        return self.probabilities @ tranche_loss(self.loss_fractions, tranche)

    def expected_loss(self) -> np.ndarray:
        return self.probabilities @ self.loss_fractions

    @classmethod
    def from_default_counts(
        cls, distributions: Sequence[LossDistribution], lgd: float = 1.0
    ) -> "LossTermStructure":
        """Slices over m = 0..N defaults, read as loss fraction m/N."""
        sizes = {d.probabilities.size for d in distributions}
        if len(sizes) != 1:
            raise DomainException("LossTermStructure", "slices cover different pool sizes")
        n_firms = sizes.pop() - 1
        return cls(
            support=np.arange(n_firms + 1) / max(n_firms, 1),
            probabilities=np.vstack([d.probabilities for d in distributions]),
            lgd=lgd,
        )

    @classmethod
    def zero_loss(cls, n_periods: int) -> "LossTermStructure":
        probabilities = np.zeros((n_periods + 1, 2))
        probabilities[:, 0] = 1.0
        return cls(support=np.array([0.0, 1.0]), probabilities=probabilities)


@dataclass(frozen=True)
class Legs:
    premium_per_unit_spread: float
    protection: float


@dataclass(frozen=True)
class TrancheQuote:
    label: str
    spread: float
    premium_per_unit_spread: float
    protection: float

    @property
    def spread_bps(self) -> float:
        return self.spread * BASIS_POINTS


def _check_coverage(contract: CdoContract, term: LossTermStructure) -> None:
    if term.n_periods < contract.n_periods:
        raise DomainException(
            "legs",
            f"term structure covers {term.n_periods} periods, contract has {contract.n_periods}",
        )


def legs_from_expected_losses(
    contract: CdoContract, tranche: TrancheSpec, expected: np.ndarray
) -> Legs:
    """Legs from E[C_l,t_k], k = 0..K."""
    expected = np.asarray(expected, dtype=float)[: contract.n_periods + 1]
    discounts = contract.discounts()
    premium = float(
        np.sum(discounts * contract.period * contract.notional * (tranche.width - expected[1:]))
    )
    protection = float(np.sum(discounts * contract.notional * np.diff(expected)))
    return Legs(premium_per_unit_spread=premium, protection=protection)


def legs(contract: CdoContract, tranche: TrancheSpec, term: LossTermStructure) -> Legs:
    _check_coverage(contract, term)
    return legs_from_expected_losses(contract, tranche, term.expected_tranche_loss(tranche))


def spread_from_legs(tranche: TrancheSpec, value: Legs) -> float:
    if value.premium_per_unit_spread <= 0.0:
        raise DegenerateTrancheException(tranche.label)
    return value.protection / value.premium_per_unit_spread


def spread(contract: CdoContract, tranche: TrancheSpec, term: LossTermStructure) -> float:
    """Premium rate equating premium and protection legs."""
    return spread_from_legs(tranche, legs(contract, tranche, term))


def kernel_spread(
    contract: CdoContract,
    tranche: TrancheSpec,
    kernel: TransitionMatrix,
    lgd: float = 1.0,
) -> float:
    """
    Spread written directly on kernel powers:

        sum_k beta_k sum_m (P^k - P^(k-1))_{(0,N),(m,.)} tl(m/N)
        ---------------------------------------------------------
        gamma sum_k beta_k sum_m (K_U - K_L - tl(m/N)) P^k_{(0,N),(m,.)}
    """
    n = kernel.n_firms
    payoff = tranche_loss(lgd * np.arange(n + 1) / max(n, 1), tranche)
    # tl evaluated on every chain state through its default count.
    state_payoff = np.repeat(payoff, np.arange(1, n + 2))
    discounts = contract.discounts()
    start = np.zeros(kernel.matrix.shape[0])
    start[0] = 1.0
    transposed = kernel.matrix.T.tocsr()
    previous = start
    numerator = 0.0
    denominator = 0.0
    for beta in discounts:
        current = transposed @ previous
        numerator += beta * float((current - previous) @ state_payoff)
        denominator += beta * float(current @ (tranche.width - state_payoff))
        previous = current
    if denominator * contract.period <= 0.0:
        raise DegenerateTrancheException(tranche.label)
    return numerator / (contract.period * denominator)


def price_tranches(
    contract: CdoContract,
    term: LossTermStructure,
    tranches: Optional[Sequence[TrancheSpec]] = None,
) -> list[TrancheQuote]:
    quotes = []
    for tranche in tranches or contract.tranches:
        value = legs(contract, tranche, term)
        quotes.append(
            TrancheQuote(
                label=tranche.label,
                spread=spread_from_legs(tranche, value),
                premium_per_unit_spread=value.premium_per_unit_spread,
                protection=value.protection,
            )
        )
    logger.info("Priced %d tranche(s) over %d periods", len(quotes), contract.n_periods)
    return quotes


_STANDARD_GRID = (
    (0.00, 0.03, "equity"),
    (0.03, 0.07, "mezzanine"),
    (0.07, 0.10, "senior"),
    (0.10, 0.15, "senior-2"),
    (0.15, 0.30, "super-senior"),
)


def standard_tranches() -> tuple[TrancheSpec, ...]:
    """The 0-3, 3-7, 7-10, 10-15, 15-30 index tranche grid."""
    return tuple(
        TrancheSpec(attachment=lower, detachment=upper, label=label)
        for lower, upper, label in _STANDARD_GRID
    )
