# src/services/reproduce_service.py
"""
Reproduce Service - data tables behind the published loss, correlation and smile figures
"""

from __future__ import annotations

import logging
from typing import Callable, Optional

import numpy as np
import pandas as pd

from ..core.copula import asset_corr_from_default_corr, copula_loss_distribution, default_correlation
from ..core.multiperiod import k_step_loss, transition_matrix
from ..core.sector_loss import (
    correlation_surface,
    loss_distribution,
    solve_eta_F,
    solve_sector_correlation,
)
from ..schemas import ChainSpec, ReproduceConfig, SectorParams, SmileSearchConfig
from .smile_service import fit_smile_params

logger = logging.getLogger(__name__)

Tables = dict[str, pd.DataFrame]

# Rating classes of the smile experiment: (one-year default prob, asset correlation, printed rho)
RATING_CLASSES = {
    "high": (0.001, 0.2, 0.0059),
    "low": (0.015, 0.3, 0.0562),
}


class ReproduceService:
    """Service regenerating figure data as CSV-ready tables"""

    pool_size = 125
    marginal = 0.05

    def figures(self) -> dict[str, Callable[[ReproduceConfig], Tables]]:
        return {
            "fig2": self.fig2,
            "fig3-6": self.fig3_6,
            "fig7": self.fig7,
            "fig8": self.fig8,
            "fig9": self.fig9,
            "horizon": self.horizon,
        }

    def run(self, figure: str, config: Optional[ReproduceConfig] = None) -> Tables:
        config = config or ReproduceConfig()
        logger.info("Reproducing %s", figure)
        return self.figures()[figure](config)

    def fig2(self, config: ReproduceConfig) -> Tables:
        """Loss distributions at eta_FS=-2.1, q=0.05 for rising correlation."""
        frames = []
        for rho in (0.01, 0.02, 0.05, 0.07):
            eta_S, eta_F = solve_sector_correlation(self.marginal, rho, self.pool_size, -2.1)
            dist = loss_distribution(SectorParams.single(self.pool_size, eta_S, -2.1, eta_F))
            frames.append(
                pd.DataFrame(
                    {
                        "rho": rho,
                        "eta_S": eta_S,
                        "eta_F": eta_F,
                        "n": np.arange(self.pool_size + 1),
                        "prob": dist.probabilities,
                    }
                )
            )
        return {"fig2_loss_distribution.csv": pd.concat(frames, ignore_index=True)}

    def fig3_6(self, config: ReproduceConfig) -> Tables:
        """Correlation over the four sign quadrants of (eta_S, eta_FS)."""
        tables: Tables = {}
        magnitudes_S = np.linspace(0.0, 20.0, config.surface_points)
        magnitudes_FS = np.linspace(0.0, 5.0, config.surface_points)
        for q in (0.01, 0.05):
            for name, sign_S, sign_FS in (("np", -1, 1), ("nn", -1, -1), ("pp", 1, 1), ("pn", 1, -1)):
                points = correlation_surface(
                    q,
                    self.pool_size,
                    sign_S * magnitudes_S,
                    sign_FS * magnitudes_FS,
                    threads=config.threads,
                )
                tables[f"fig3-6_q{q:g}_{name}.csv"] = pd.DataFrame(
                    [(p.eta_S, p.eta_FS, p.eta_F_star, p.rho) for p in points],
                    columns=["eta_S", "eta_FS", "eta_F_star", "rho"],
                )
        return tables

    def fig7(self, config: ReproduceConfig) -> Tables:
        """Multi-period loss distributions for N=50 across removal probabilities."""
        rows = []
        for removal_prob in (0.1, 0.3, 0.5, 0.999):
            spec = ChainSpec(n_firms=50, eta_S=5.514, eta_FS=-5.0, eta_F=-2.8, removal_prob=removal_prob)
            kernel = transition_matrix(spec)
            for k in (1, 5, 10):
                dist = k_step_loss(spec, k, kernel)
                rows.extend((removal_prob, k, m, p) for m, p in dist.rows())
        return {"fig7_multiperiod.csv": pd.DataFrame(rows, columns=["p_R", "k", "m", "prob"])}

    def fig8(self, config: ReproduceConfig) -> Tables:
        """Graphical against copula one-period loss distributions at N=125, q=0.05."""
        tables: Tables = {}
        for rho, (eta_FS, eta_S) in ((0.01, (-0.95, 9.2)), (0.05, (-2.1, 15.0))):
            eta_F = solve_eta_F(self.marginal, self.pool_size, eta_S, eta_FS)
            graphical = loss_distribution(SectorParams.single(self.pool_size, eta_S, eta_FS, eta_F))
            rho_A = asset_corr_from_default_corr(rho, self.marginal)
            copula = copula_loss_distribution(rho_A, self.marginal, self.pool_size)
            tables[f"fig8_rho{rho:g}.csv"] = pd.DataFrame(
                {
                    "n": np.arange(self.pool_size + 1),
                    "graphical": graphical.probabilities,
                    "copula": copula.probabilities,
                }
            )
            logger.info(
                "fig8 rho=%g: eta_F=%.4f, rho_A=%.4f, P(L>=25) graphical %.3e copula %.3e",
                rho,
                eta_F,
                rho_A,
                graphical.tail(25),
                copula.tail(25),
            )
        return tables

    def fig9(self, config: ReproduceConfig) -> Tables:
        """Smile-correction fits for both rating classes."""
        spreads = []
        params = []
        for name, (q, rho_A, _) in RATING_CLASSES.items():
            search = SmileSearchConfig(
                name=name,
                one_year_default_prob=q,
                asset_correlation=rho_A,
                n_paths=config.n_paths,
                max_evaluations=config.smile_evaluations,
                **({"seed": config.seed} if config.seed is not None else {}),
            )
            result = fit_smile_params(search, with_implied=True)
            spreads.extend({"rating": name, **row} for row in result.table())
            params.append(result.to_dict())
        return {
            "fig9_spreads.csv": pd.DataFrame(spreads),
            "fig9_params.csv": pd.DataFrame(params),
        }

    def horizon(self, config: ReproduceConfig) -> Tables:
        """Default-indicator correlation of the rating classes at 1- and 5-year horizons."""
        rows = []
        for name, (q, rho_A, printed) in RATING_CLASSES.items():
            q5 = 1.0 - (1.0 - q) ** 5
            rows.append(
                {
                    "rating": name,
                    "rho_A": rho_A,
                    "q_1y": q,
                    "rho_1y": default_correlation(rho_A, q),
                    "q_5y": q5,
                    "rho_5y": default_correlation(rho_A, q5),
                    "printed": printed,
                }
            )
        return {"horizon_correlation.csv": pd.DataFrame(rows)}


# Singleton instance
_reproduce_service: Optional[ReproduceService] = None


def get_reproduce_service() -> ReproduceService:
    """Get reproduce service instance (singleton)"""
    global _reproduce_service

    if _reproduce_service is None:
        _reproduce_service = ReproduceService()

    return _reproduce_service
