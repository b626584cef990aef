# src/services/smile_service.py
"""
Smile Service - fit multi-period graphical parameters against copula spreads
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.optimize import brentq, minimize

from ..core.copula import CopulaQuote, CopulaScenarioSet, ImpliedCorrelationRow, implied_correlation_report
from ..core.exceptions import ToricCreditException
from ..core.multiperiod import loss_term_structure
from ..core.pricing import LossTermStructure, TrancheQuote, price_tranches, standard_tranches
from ..core.sector_loss import solve_eta_F
from ..schemas import CdoContract, ChainSpec, CopulaSpec, SmileSearchConfig

logger = logging.getLogger(__name__)

EQUITY, MEZZANINE = 0, 1
SENIOR = (2, 3, 4)


def relative_error(value: float, reference: float) -> float:
    if reference == 0.0:
        return float("inf") if value else 0.0
    return value / reference - 1.0


@dataclass
class SmileFitResult:
    config_name: str
    eta_F: float
    eta_FS: float
    eta_S: float
    removal_prob: float
    objective: float
    feasible: bool
    evaluations: int
    copula: list[CopulaQuote]
    graphical: list[TrancheQuote]
    implied: list[ImpliedCorrelationRow] = field(default_factory=list)

    @property
    def mezzanine_error(self) -> float:
        return relative_error(self.graphical[MEZZANINE].spread, self.copula[MEZZANINE].spread)

    @property
    def equity_lower(self) -> bool:
        return bool(self.graphical[EQUITY].spread < self.copula[EQUITY].spread)

    @property
    def seniors_higher(self) -> bool:
        return all(bool(self.graphical[i].spread > self.copula[i].spread) for i in SENIOR)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.config_name,
            "eta_F": self.eta_F,
            "eta_FS": self.eta_FS,
            "eta_S": self.eta_S,
            "removal_prob": self.removal_prob,
            "objective": float(self.objective),
            "feasible": self.feasible,
            "evaluations": self.evaluations,
            "mezzanine_relative_error": float(self.mezzanine_error),
            "equity_lower": self.equity_lower,
            "seniors_higher": self.seniors_higher,
        }

    def table(self) -> list[dict[str, Any]]:
        implied = {row.label: row.implied_rho_A for row in self.implied}
        return [
            {
                "tranche": cop.label,
                "copula_bps": cop.spread_bps,
                "copula_stderr_bps": cop.stderr_bps,
                "graphical_bps": gra.spread_bps,
                "graphical_implied_rho_A": implied.get(gra.label),
            }
            for cop, gra in zip(self.copula, self.graphical)
        ]


@dataclass
class _Evaluation:
    objective: float
    eta_F: Optional[float] = None
    quotes: Optional[list[TrancheQuote]] = None


class SmileService:
    """Search (eta_FS, eta_S, p_R) so the graphical chain corrects the copula smile"""

    _FAILED = 1e6

    def __init__(self, config: SmileSearchConfig) -> None:
        self.config = config
        self.contract = CdoContract.regular(
            maturity=config.maturity,
            frequency=config.frequency,
            rate=config.rate,
            tranches=standard_tranches(),
        )
        self.copula_spec = CopulaSpec.from_default_probability(
            config.one_year_default_prob,
            config.asset_correlation,
            config.n_firms,
            recovery=config.recovery,
        )
        self.scenarios = CopulaScenarioSet(self.copula_spec, config.n_paths, config.seed)
        self.copula_quotes = self.scenarios.tranche_quotes(self.contract)
        # One chain step per payment period.
        self.step_default_prob = float(
            -np.expm1(config.frequency * np.log1p(-config.one_year_default_prob))
        )
        self.lgd = 1.0 - config.recovery if config.apply_lgd else 1.0
        self.evaluations = 0

    def graphical_quotes(self, eta_FS: float, eta_S: float, removal_prob: float) -> tuple[float, list[TrancheQuote]]:
        """eta_F re-solved for the per-step default probability, then the chain priced."""
        n = self.config.n_firms
        eta_F = solve_eta_F(self.step_default_prob, n, eta_S, eta_FS)
        chain = ChainSpec(
            n_firms=n,
            eta_S=eta_S,
            eta_FS=eta_FS,
            eta_F=eta_F,
            removal_prob=float(np.clip(removal_prob, 0.0, 1.0)),
        )
        term = LossTermStructure.from_default_counts(
            loss_term_structure(chain, self.contract.n_periods), lgd=self.lgd
        )
        return eta_F, price_tranches(self.contract, term)

    def mezzanine_mismatch(self, quotes: list[TrancheQuote]) -> float:
        return abs(relative_error(quotes[MEZZANINE].spread, self.copula_quotes[MEZZANINE].spread))

    def score(self, quotes: list[TrancheQuote]) -> float:
        """Negative spread correction plus the mezzanine-match penalty; lower is better."""
        cop = self.copula_quotes
        gain = (cop[EQUITY].spread - quotes[EQUITY].spread) + sum(
            quotes[i].spread - cop[i].spread for i in SENIOR
        )
        penalty = max(0.0, self.mezzanine_mismatch(quotes) - self.config.mezzanine_tolerance)
        return -gain + self.config.penalty_weight * penalty

    def evaluate(self, point: np.ndarray) -> _Evaluation:
        self.evaluations += 1
        lower = np.asarray(self.config.lower)
        upper = np.asarray(self.config.upper)
        eta_FS, eta_S, removal_prob = np.clip(point, lower, upper)
        try:
            eta_F, quotes = self.graphical_quotes(float(eta_FS), float(eta_S), float(removal_prob))
        except ToricCreditException as exc:
            logger.debug("Smile objective failed at %s: %s", point, exc.message)
            return _Evaluation(self._FAILED)
        return _Evaluation(self.score(quotes), eta_F, quotes)

    def refine_mezzanine(self, point: np.ndarray, grid_points: int = 25) -> tuple[np.ndarray, _Evaluation]:
        """
        Re-solve eta_S at fixed (eta_FS, p_R) so the mezzanine spread matches
        the copula; the sign change nearest the current eta_S wins.
        """
        eta_FS, eta_S, removal_prob = (float(x) for x in point)
        target = self.copula_quotes[MEZZANINE].spread

        def gap(value: float) -> float:
            try:
                _, quotes = self.graphical_quotes(eta_FS, value, removal_prob)
            except ToricCreditException:
                return float("nan")
            return quotes[MEZZANINE].spread / target - 1.0

        grid = np.linspace(self.config.lower[1], self.config.upper[1], grid_points)
        values = np.array([gap(x) for x in grid])
        brackets = [
            (grid[i], grid[i + 1])
            for i in range(grid_points - 1)
            if np.isfinite(values[i]) and np.isfinite(values[i + 1]) and values[i] * values[i + 1] <= 0
        ]
        if not brackets:
            return point, self.evaluate(point)
        low, high = min(brackets, key=lambda b: abs(0.5 * (b[0] + b[1]) - eta_S))
        try:
            root = brentq(gap, low, high, xtol=1e-10)
        except (ValueError, RuntimeError):
            return point, self.evaluate(point)
        refined = np.array([eta_FS, root, removal_prob])
        return refined, self.evaluate(refined)

    def fit(self) -> SmileFitResult:
        config = self.config
        start = np.asarray(config.initial, dtype=float)
        best_point = start
        best = self.evaluate(start)
        if not config.pinned:
            bounds = list(zip(config.lower, config.upper))
            for attempt in range(config.restarts + 1):
                result = minimize(
                    lambda x: self.evaluate(x).objective,
                    best_point,
                    method="Nelder-Mead",
                    bounds=bounds,
                    options={"maxfev": config.max_evaluations, "xatol": 1e-4, "fatol": 1e-10},
                )
                candidate = self.evaluate(result.x)
                logger.info(
                    "Smile search %s restart %d: objective %.6g at %s",
                    config.name,
                    attempt,
                    candidate.objective,
                    np.round(result.x, 4).tolist(),
                )
                if candidate.objective < best.objective:
                    best, best_point = candidate, np.clip(result.x, config.lower, config.upper)
                elif attempt > 0:
                    break
            if best.quotes is not None and self.mezzanine_mismatch(best.quotes) > config.mezzanine_tolerance:
                point, candidate = self.refine_mezzanine(best_point)
                if candidate.objective < best.objective:
                    logger.info(
                        "Smile search %s: eta_S refined to %.6g, objective %.6g",
                        config.name,
                        point[1],
                        candidate.objective,
                    )
                    best, best_point = candidate, point
        if best.quotes is None:
            raise ToricCreditException(f"Smile fit for {config.name} found no priceable point")
        mezzanine_error = self.mezzanine_mismatch(best.quotes)
        feasible = bool(mezzanine_error <= config.mezzanine_tolerance)
        if not feasible:
            logger.warning(
                "Smile fit for %s is infeasible: mezzanine off by %.2f%%",
                config.name,
                100 * mezzanine_error,
            )
        eta_FS, eta_S, removal_prob = (float(x) for x in best_point)
        return SmileFitResult(
            config_name=config.name,
            eta_F=float(best.eta_F),
            eta_FS=eta_FS,
            eta_S=eta_S,
            removal_prob=removal_prob,
            objective=best.objective,
            feasible=feasible,
            evaluations=self.evaluations,
            copula=self.copula_quotes,
            graphical=best.quotes,
        )

    def implied_smile(self, result: SmileFitResult) -> list[ImpliedCorrelationRow]:
        """Copula correlations implied by the graphical spreads, tranche by tranche."""
        observed = {quote.label: quote.spread for quote in result.graphical}
        return implied_correlation_report(observed, self.contract, self.scenarios)


def fit_smile_params(config: SmileSearchConfig, with_implied: bool = False) -> SmileFitResult:
    service = SmileService(config)
    result = service.fit()
    if with_implied:
        result.implied = service.implied_smile(result)
    return result
