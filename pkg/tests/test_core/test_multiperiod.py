# tests/test_core/test_multiperiod.py
"""
Tests for the multi-period default chain
"""

import numpy as np
import pytest
from scipy import sparse
from scipy.stats import binom

from src.core.exceptions import DomainException
from src.core.graph_model import enumerate_states, joint_distribution, sector_graph
from src.core.multiperiod import (
    ChainState,
    chain_states,
    increment_distribution,
    k_step_loss,
    loss_term_structure,
    scaled_chain_spec,
    simulate_paths,
    state_count,
    state_index,
    transition_matrix,
)
from src.core.sector_loss import loss_distribution, pair_marginals_single_sector, single_sector_pmf
from src.schemas import ChainSpec, SectorParams


def conditional_increment(spec: ChainSpec, healthy: int, kept: int) -> np.ndarray:
    """
    New defaults among `healthy` firms of a one-sector graph in which the
    other `kept` firms are known to have defaulted, by enumeration.
    """
    if healthy == 0:
        return np.ones(1)
    total = healthy + kept
    graph, weights = sector_graph(SectorParams.single(total, spec.eta_S, spec.eta_FS, spec.eta_F))
    probabilities = joint_distribution(graph, weights).probabilities
    states = enumerate_states(graph.node_count)
    given = states[:, :kept].all(axis=1)
    counts = states[given, kept:total].sum(axis=1).astype(np.int64)
    found = np.bincount(counts, weights=probabilities[given], minlength=healthy + 1)
    return found / found.sum()


class TestStates:
    def test_index_layout(self):
        states = chain_states(4)
        assert len(states) == state_count(4) == 15
        assert [s.index for s in states] == list(range(15))
        assert state_index(0, 0) == 0
        assert state_index(2, 1) == 4

    def test_initial_state(self):
        start = ChainState.initial(10)
        assert (start.defaults, start.remaining, start.in_system_defaults) == (0, 10, 0)
        assert start.index == 0

    def test_invalid_state(self):
        with pytest.raises(DomainException):
            ChainState(defaults=2, remaining=5, n_firms=10)


class TestTransitionMatrix:
    def test_rows_are_stochastic(self, small_chain):
        kernel = transition_matrix(small_chain)
        assert sparse.issparse(kernel.matrix)
        np.testing.assert_allclose(kernel.row_sums(), 1.0, atol=1e-12)
        assert kernel.matrix.min() >= 0

    def test_defaults_never_decrease(self, small_chain):
        dense = transition_matrix(small_chain).dense()
        states = chain_states(small_chain.n_firms)
        for src in states:
            for dst in states:
                if dense[src.index, dst.index] > 0:
                    assert dst.defaults >= src.defaults
                    assert dst.remaining <= src.remaining

    @pytest.mark.parametrize("tilt", ["post_removal", "pre_removal"])
    def test_first_step_is_one_period_model(self, small_chain, tilt):
        spec = small_chain.model_copy(update={"tilt": tilt})
        expected = single_sector_pmf(spec.n_firms, spec.eta_S, spec.eta_FS, spec.eta_F)
        np.testing.assert_allclose(k_step_loss(spec, 1).probabilities, expected, atol=1e-14)

    def test_zero_steps_is_point_mass(self, small_chain):
        dist = k_step_loss(small_chain, 0)
        assert dist.probabilities[0] == 1.0
        assert dist.probabilities[1:].sum() == 0.0

    def test_power_matches_iteration(self, small_chain):
        kernel = transition_matrix(small_chain)
        row = kernel.power(4).dense()[0]
        np.testing.assert_allclose(
            kernel.default_marginal(row).probabilities,
            k_step_loss(small_chain, 4, kernel).probabilities,
            atol=1e-13,
        )
        assert kernel.power(4).steps == 4
        with pytest.raises(DomainException):
            kernel.power(-1)

    def test_term_structure(self, small_chain):
        kernel = transition_matrix(small_chain)
        slices = loss_term_structure(small_chain, 5, kernel)
        assert len(slices) == 6
        means = [d.mean() for d in slices]
        assert all(b >= a for a, b in zip(means, means[1:]))
        np.testing.assert_allclose(
            slices[3].probabilities, k_step_loss(small_chain, 3, kernel).probabilities
        )

    def test_removal_weakens_contagion(self, small_chain):
        # eta_FS < 0: defaulted firms left in the system lower the sector
        # weight and so raise the default probability of healthy firms.
        slow = small_chain.model_copy(update={"removal_prob": 0.05})
        fast = small_chain.model_copy(update={"removal_prob": 0.95})
        assert k_step_loss(fast, 6).mean() < k_step_loss(slow, 6).mean()

    def test_increment_distribution(self, small_chain):
        dist = increment_distribution(small_chain, in_system=2, current=5)
        assert dist.probabilities.size == 4
        with pytest.raises(DomainException):
            increment_distribution(small_chain, in_system=6, current=5)

    def test_increment_matches_conditioned_graph(self):
        spec = ChainSpec(n_firms=6, eta_S=0.7, eta_FS=-1.3, eta_F=-0.4, removal_prob=0.5)
        found = increment_distribution(spec, in_system=2, current=6).probabilities
        np.testing.assert_allclose(found, conditional_increment(spec, 4, 2), atol=1e-12)

    def test_increment_without_defaults_is_one_period_model(self, small_chain):
        found = increment_distribution(small_chain, in_system=0, current=6).probabilities
        expected = loss_distribution(small_chain.params).probabilities
        np.testing.assert_allclose(found, expected, atol=1e-14)

    def test_two_steps_match_path_sum(self):
        spec = ChainSpec(n_firms=5, eta_S=0.9, eta_FS=-1.1, eta_F=-1.2, removal_prob=0.4)
        expected = np.zeros(6)
        for d1, p1 in enumerate(conditional_increment(spec, 5, 0)):
            removal = binom.pmf(np.arange(d1 + 1), d1, spec.removal_prob)
            for removed, p_removed in enumerate(removal):
                step = conditional_increment(spec, 5 - d1, d1 - removed)
                expected[d1 : d1 + step.size] += p1 * p_removed * step
        np.testing.assert_allclose(k_step_loss(spec, 2).probabilities, expected, atol=1e-12)

    def test_chapman_kolmogorov(self):
        spec = ChainSpec(n_firms=20, eta_S=2.0, eta_FS=-0.7, eta_F=-2.5, removal_prob=0.3)
        kernel = transition_matrix(spec)
        combined = (kernel.power(2).matrix @ kernel.power(3).matrix).toarray()
        np.testing.assert_allclose(kernel.power(5).dense(), combined, atol=1e-10)
        np.testing.assert_allclose(kernel.power(5).row_sums(), 1.0, atol=1e-10)

    def test_no_removal_keeps_every_firm(self, small_chain):
        spec = small_chain.model_copy(update={"removal_prob": 0.0})
        row = transition_matrix(spec).power(4).dense()[0]
        kept = [s.index for s in chain_states(spec.n_firms) if s.remaining == spec.n_firms]
        assert row[kept].sum() == pytest.approx(1.0, abs=1e-12)

    def test_certain_removal_never_tilts(self, small_chain):
        spec = small_chain.model_copy(update={"removal_prob": 1.0})
        n = spec.n_firms
        expected = np.zeros(n + 1)
        for d1, p1 in enumerate(single_sector_pmf(n, spec.eta_S, spec.eta_FS, spec.eta_F)):
            step = single_sector_pmf(n - d1, spec.eta_S, spec.eta_FS, spec.eta_F)
            expected[d1 : d1 + step.size] += p1 * step
        np.testing.assert_allclose(k_step_loss(spec, 2).probabilities, expected, atol=1e-13)

    def test_large_pool_kernel(self, fig7_chain):
        kernel = transition_matrix(fig7_chain(0.5))
        assert kernel.matrix.shape == (1326, 1326)
        np.testing.assert_allclose(kernel.row_sums(), 1.0, atol=1e-10)
        slices = loss_term_structure(fig7_chain(0.5), 10, kernel)
        for dist in slices:
            assert dist.probabilities.sum() == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.slow
    @pytest.mark.parametrize("k", [5, 10])
    def test_tails_thin_as_removal_grows(self, fig7_chain, k):
        tails = [k_step_loss(fig7_chain(p_R), k).tail(25) for p_R in (0.1, 0.3, 0.5, 0.999)]
        assert all(later <= earlier for earlier, later in zip(tails, tails[1:]))
        assert tails[-1] < tails[0]


class TestScaledChain:
    def test_step_probability_compounds_to_horizon(self, small_chain):
        spec = scaled_chain_spec(small_chain, horizon_default_prob=0.2, steps=4)
        p1, _ = pair_marginals_single_sector(spec.params)
        assert 1 - (1 - p1) ** 4 == pytest.approx(0.2, rel=1e-8)
        assert (spec.eta_S, spec.eta_FS) == (small_chain.eta_S, small_chain.eta_FS)

    def test_rejects_bad_inputs(self, small_chain):
        with pytest.raises(DomainException):
            scaled_chain_spec(small_chain, 0.2, 0)
        with pytest.raises(DomainException):
            scaled_chain_spec(small_chain, 1.0, 2)


class TestSimulation:
    def test_paths_are_monotone(self, small_chain):
        paths = simulate_paths(small_chain, 5, 2000, seed=7)
        assert paths.cumulative_defaults.shape == (2000, 6)
        assert np.all(np.diff(paths.cumulative_defaults, axis=1) >= 0)
        assert paths.cumulative_defaults.max() <= small_chain.n_firms
        assert paths.metadata == {"removal_prob": small_chain.removal_prob, "steps": 5}

    def test_seed_determinism(self, small_chain):
        first = simulate_paths(small_chain, 3, 3000, seed=11, block_size=1000)
        second = simulate_paths(small_chain, 3, 3000, seed=11, block_size=1000)
        other = simulate_paths(small_chain, 3, 3000, seed=12, block_size=1000)
        np.testing.assert_array_equal(first.cumulative_defaults, second.cumulative_defaults)
        assert not np.array_equal(first.cumulative_defaults, other.cumulative_defaults)

    def test_thread_count_does_not_change_paths(self, small_chain):
        serial = simulate_paths(small_chain, 4, 5000, seed=3, threads=1, block_size=700)
        parallel = simulate_paths(small_chain, 4, 5000, seed=3, threads=4, block_size=700)
        np.testing.assert_array_equal(serial.cumulative_defaults, parallel.cumulative_defaults)

    @pytest.mark.parametrize("tilt", ["post_removal", "pre_removal"])
    def test_agrees_with_exact_kernel(self, small_chain, tilt):
        spec = small_chain.model_copy(update={"tilt": tilt})
        paths = simulate_paths(spec, 3, 40_000, seed=2024)
        exact = k_step_loss(spec, 3).probabilities
        empirical = paths.empirical_distribution(3).probabilities
        np.testing.assert_allclose(empirical, exact, atol=0.015)
        np.testing.assert_allclose(paths.empirical_distribution(0).probabilities[0], 1.0)

    def test_rejects_bad_inputs(self, small_chain):
        with pytest.raises(DomainException):
            simulate_paths(small_chain, 3, 0)
        with pytest.raises(DomainException):
            simulate_paths(small_chain, -1, 10)


@pytest.mark.slow
@pytest.mark.parametrize("removal_prob", [0.1, 0.999])
def test_million_paths_match_kernel(fig7_chain, removal_prob):
    spec = fig7_chain(removal_prob)
    paths = simulate_paths(spec, 10, 1_000_000, seed=99)
    for k in (5, 10):
        exact = k_step_loss(spec, k).probabilities
        empirical = paths.empirical_distribution(k).probabilities
        assert 0.5 * np.abs(empirical - exact).sum() < 0.01
