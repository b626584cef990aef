# tests/test_core/test_copula.py
"""
Tests for the one-factor normal copula comparator
"""

import numpy as np
import pytest
from scipy.stats import binom, kstest

from src.core.copula import (
    CopulaScenarioSet,
    asset_corr_from_default_corr,
    bivariate_joint_default,
    copula_loss_distribution,
    default_correlation,
    implied_correlation,
    implied_correlation_report,
    joint_default_probability,
    mc_tranche_spreads,
    simulate_default_times,
)
from src.core.exceptions import DomainException, RangeException
from src.core.pricing import LossTermStructure, price_tranches, standard_tranches
from src.schemas import CdoContract, CopulaSpec


@pytest.fixture
def copula_spec():
    return CopulaSpec.from_default_probability(0.05, 0.2, n_firms=20)


@pytest.fixture
def short_contract():
    """2-year, semi-annual, r=5%"""
    return CdoContract.regular(maturity=2.0, frequency=0.5, rate=0.05, tranches=standard_tranches())


@pytest.fixture
def scenarios(copula_spec):
    return CopulaScenarioSet(copula_spec, n_paths=3000, seed=99)


class TestJointDefault:
    def test_independent_limit(self):
        assert joint_default_probability(0.0, 0.05) == pytest.approx(0.0025, rel=1e-15)
        assert default_correlation(0.0, 0.05) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("rho_A, q", [(0.1, 0.05), (0.3, 0.015), (0.2, 0.001), (0.6, 0.2)])
    def test_quadrature_matches_owens_t(self, rho_A, q):
        assert joint_default_probability(rho_A, q) == pytest.approx(
            bivariate_joint_default(rho_A, q), rel=1e-7, abs=1e-11
        )

    @pytest.mark.parametrize(
        "rho_A, q, expected, tol",
        [(0.042, 0.05, 0.00995, 2e-4), (0.18, 0.05, 0.0508, 5e-4), (0.2, 0.001, 0.00589, 1e-4)],
    )
    def test_reference_values(self, rho_A, q, expected, tol):
        assert default_correlation(rho_A, q) == pytest.approx(expected, abs=tol)

    def test_monotone_in_asset_correlation(self):
        values = [default_correlation(r, 0.05) for r in (0.05, 0.1, 0.2, 0.4, 0.8)]
        assert values == sorted(values)

    @pytest.mark.parametrize("rho_A, q", [(1.0, 0.05), (-0.1, 0.05), (0.2, 0.0), (0.2, 1.0)])
    def test_domain(self, rho_A, q):
        with pytest.raises(DomainException):
            joint_default_probability(rho_A, q)

    def test_inverse(self):
        rho_A = asset_corr_from_default_corr(0.05, 0.05)
        assert rho_A == pytest.approx(0.18, abs=0.005)
        assert default_correlation(rho_A, 0.05) == pytest.approx(0.05, rel=1e-8)
        assert asset_corr_from_default_corr(0.0, 0.05) == 0.0


class TestCopulaLoss:
    def test_normalized_with_mean(self):
        dist = copula_loss_distribution(0.18, 0.05, 125)
        assert dist.probabilities.size == 126
        assert dist.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
        assert dist.mean() == pytest.approx(125 * 0.05, rel=1e-6)

    def test_zero_correlation_is_binomial(self):
        dist = copula_loss_distribution(0.0, 0.05, 30)
        np.testing.assert_allclose(dist.probabilities, binom.pmf(np.arange(31), 30, 0.05), atol=1e-12)

    def test_correlation_fattens_tail(self):
        thin = copula_loss_distribution(0.05, 0.05, 125)
        fat = copula_loss_distribution(0.4, 0.05, 125)
        assert fat.tail(25) > thin.tail(25)


class TestMonteCarlo:
    def test_default_probability_at_horizon(self, copula_spec):
        times = simulate_default_times(copula_spec, horizon=1.0, n_paths=4000, seed=5)
        assert times.times.shape == (4000, 20)
        assert times.indicators().mean() == pytest.approx(0.05, abs=0.01)
        counts = times.default_counts([0.5, 1.0, 2.0])
        assert np.all(np.diff(counts, axis=1) >= 0)

    def test_seed_determinism(self, copula_spec, short_contract):
        first = mc_tranche_spreads(copula_spec, short_contract, 2000, seed=1)
        second = mc_tranche_spreads(copula_spec, short_contract, 2000, seed=1)
        assert first == second

    def test_spreads_fall_with_seniority(self, scenarios, short_contract):
        quotes = scenarios.tranche_quotes(short_contract)
        assert [q.label for q in quotes] == [t.label for t in short_contract.tranches]
        assert quotes[0].spread > quotes[1].spread > quotes[-1].spread
        assert all(q.stderr >= 0 for q in quotes)

    def test_common_random_numbers(self, scenarios, short_contract):
        # Equity protection loses value as defaults cluster.
        equity = short_contract.tranches[:1]
        spreads = [scenarios.tranche_quotes(short_contract, r, equity)[0].spread for r in (0.0, 0.3, 0.6)]
        assert spreads == sorted(spreads, reverse=True)

    def test_rejects_bad_correlation(self, scenarios):
        with pytest.raises(DomainException):
            scenarios.default_times(1.2)

    def test_default_times_are_exponential(self):
        spec = CopulaSpec.from_default_probability(0.05, 0.3, n_firms=3)
        times = simulate_default_times(spec, horizon=1.0, n_paths=100_000, seed=21).times[:, 0]
        result = kstest(times, "expon", args=(0.0, 1.0 / spec.default_intensity))
        assert result.pvalue > 1e-3

    def test_zero_intensity_gives_zero_spreads(self, short_contract):
        spec = CopulaSpec(asset_correlation=0.2, default_intensity=1e-12, n_firms=20)
        quotes = mc_tranche_spreads(spec, short_contract, 2000, seed=4)
        assert all(q.spread == pytest.approx(0.0, abs=1e-12) for q in quotes)

    def test_independent_names_match_binomial_pricer(self, short_contract):
        spec = CopulaSpec.from_default_probability(0.05, 0.0, n_firms=10)
        quotes = CopulaScenarioSet(spec, n_paths=20_000, seed=8).tranche_quotes(short_contract)
        times = np.concatenate([[0.0], short_contract.payment_times])
        term = LossTermStructure(
            support=np.arange(11) / 10,
            probabilities=np.vstack(
                [binom.pmf(np.arange(11), 10, spec.default_probability(t)) for t in times]
            ),
            lgd=1.0 - spec.recovery,
        )
        for simulated, exact in zip(quotes, price_tranches(short_contract, term)):
            assert simulated.label == exact.label
            assert abs(simulated.spread - exact.spread) <= 4 * simulated.stderr

    def test_count_cache_is_bounded(self, scenarios, short_contract):
        equity = short_contract.tranches[:1]
        for rho_A in np.linspace(0.0, 0.6, 12):
            scenarios.tranche_quotes(short_contract, float(rho_A), equity)
        assert scenarios.default_counts.cache_info().currsize <= 4


class TestImpliedCorrelation:
    def test_recovers_equity_correlation(self, scenarios, short_contract):
        equity = short_contract.tranches[0]
        observed = scenarios.tranche_quotes(short_contract, 0.3, (equity,))[0].spread
        assert implied_correlation(observed, equity, short_contract, scenarios) == pytest.approx(
            0.3, abs=5e-3
        )

    def test_unattainable_spread(self, scenarios, short_contract):
        with pytest.raises(RangeException) as excinfo:
            implied_correlation(10.0, short_contract.tranches[0], short_contract, scenarios)
        low, high = excinfo.value.attainable
        assert low <= high < 10.0

    def test_report_keeps_failures(self, scenarios, short_contract):
        equity = short_contract.tranches[0]
        observed = {
            "equity": scenarios.tranche_quotes(short_contract, 0.3, (equity,))[0].spread,
            "mezzanine": 10.0,
        }
        rows = implied_correlation_report(observed, short_contract, scenarios)
        assert [row.label for row in rows] == ["equity", "mezzanine"]
        assert rows[0].status == "ok"
        assert rows[1].implied_rho_A is None
