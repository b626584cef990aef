"""
Multi-period single-sector default chain.

A defaulted firm stays in the graph, pulling the sector node towards the
distressed state, until it is removed; each step every in-system
defaulted firm is removed independently with probability p_R. The chain
state is (D, N_rem): cumulative defaults and firms still in the system.
Equivalently (D, I) with I = D + N_rem - N the defaulted firms still in
the system; states are stored in (D, I) order at index D(D+1)/2 + I.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.special import expit
from scipy.stats import binom

from ..config import settings
from ..schemas import ChainSpec
from ..utils.rng import block_generator, path_blocks
from .exceptions import DomainException
from .sector_loss import LossDistribution, single_sector_pmf, solve_eta_F

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainState:
    defaults: int
    remaining: int
    n_firms: int

    def __post_init__(self) -> None:
        in_system = self.in_system_defaults
        if not 0 <= self.defaults <= self.n_firms:
            raise DomainException("ChainState", f"D={self.defaults} outside 0..{self.n_firms}")
        if not 0 <= in_system <= min(self.defaults, self.remaining):
            raise DomainException(
                "ChainState", f"(D={self.defaults}, N_rem={self.remaining}) gives I={in_system}"
            )

    @property
    def in_system_defaults(self) -> int:
        return self.defaults + self.remaining - self.n_firms

    @property
    def index(self) -> int:
        return state_index(self.defaults, self.in_system_defaults)

    @classmethod
    def initial(cls, n_firms: int) -> "ChainState":
        return cls(defaults=0, remaining=n_firms, n_firms=n_firms)


def state_index(defaults: int, in_system: int) -> int:
    return defaults * (defaults + 1) // 2 + in_system


def state_count(n_firms: int) -> int:
    return (n_firms + 1) * (n_firms + 2) // 2


def chain_states(n_firms: int) -> list[ChainState]:
    """All valid states in index order."""
    return [
        ChainState(defaults=d, remaining=n_firms - d + i, n_firms=n_firms)
        for d in range(n_firms + 1)
        for i in range(d + 1)
    ]


@dataclass(frozen=True)
class TransitionMatrix:
    """Sparse row-stochastic kernel over chain states, raised to `steps`."""
    matrix: sparse.csr_matrix
    n_firms: int
    steps: int = 1

    def power(self, k: int) -> "TransitionMatrix":
        if k < 0:
            raise DomainException("TransitionMatrix.power", "k must be nonnegative")
        result = sparse.identity(self.matrix.shape[0], format="csr")
        base = self.matrix
        exponent = k
        while exponent:
            if exponent & 1:
                result = result @ base
            exponent >>= 1
            if exponent:
                base = base @ base
        return TransitionMatrix(matrix=result.tocsr(), n_firms=self.n_firms, steps=self.steps * k)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def default_marginal(self, row: np.ndarray) -> LossDistribution:
        """Collapse a distribution over chain states onto cumulative defaults."""
        return _collapse_defaults(row, self.n_firms)


def _collapse_defaults(row: np.ndarray, n_firms: int) -> LossDistribution:
    defaults = np.repeat(np.arange(n_firms + 1), np.arange(1, n_firms + 2))
    return LossDistribution.from_array(np.bincount(defaults, weights=row, minlength=n_firms + 1))


@lru_cache(maxsize=4096)
def _increment_pmf(healthy: int, tilt: int, eta_S: float, eta_FS: float, eta_F: float) -> np.ndarray:
    pmf = single_sector_pmf(healthy, eta_S + tilt * eta_FS, eta_FS, eta_F)
    pmf.setflags(write=False)
    return pmf


def increment_distribution(spec: ChainSpec, in_system: int, current: int) -> LossDistribution:
    """
    New defaults among the current - in_system healthy firms of a
    current-firm system in which in_system defaulted firms remain.
    """
    if not 0 <= in_system <= current:
        raise DomainException(
            "increment_distribution", f"m={in_system} outside 0..N_cur={current}"
        )
    pmf = _increment_pmf(current - in_system, in_system, spec.eta_S, spec.eta_FS, spec.eta_F)
    return LossDistribution.from_array(pmf)


def transition_matrix(spec: ChainSpec) -> TransitionMatrix:
    """One-step kernel: removal first, then new defaults."""
    n = spec.n_firms
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for d in range(n + 1):
        healthy = n - d
        increments = np.arange(healthy + 1)
        for i in range(d + 1):
            source = state_index(d, i)
            removal = binom.pmf(np.arange(i + 1), i, spec.removal_prob)
            for removed, p_removed in enumerate(removal):
                if p_removed == 0.0:
                    continue
                kept = i - removed
                tilt = kept if spec.tilt == "post_removal" else i
                pmf = _increment_pmf(healthy, tilt, spec.eta_S, spec.eta_FS, spec.eta_F)
                new_d = d + increments
                rows.append(np.full(increments.size, source))
                cols.append(new_d * (new_d + 1) // 2 + kept + increments)
                data.append(p_removed * pmf)
    size = state_count(n)
    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    ).tocsr()
    matrix.eliminate_zeros()
    logger.info("Built transition kernel over %d states (%d nonzeros)", size, matrix.nnz)
    return TransitionMatrix(matrix=matrix, n_firms=n)


def _state_path(spec: ChainSpec, k: int, kernel: Optional[TransitionMatrix] = None) -> list[np.ndarray]:
    if k < 0:
        raise DomainException("k_step_loss", "k must be nonnegative")
    kernel = kernel or transition_matrix(spec)
    current = np.zeros(state_count(spec.n_firms))
    current[0] = 1.0
    transposed = kernel.matrix.T.tocsr()
    path = [current]
    for _ in range(k):
        current = transposed @ current
        path.append(current)
    return path


def k_step_loss(spec: ChainSpec, k: int, kernel: Optional[TransitionMatrix] = None) -> LossDistribution:
    """Distribution of cumulative defaults after k steps from (0, N)."""
    return _collapse_defaults(_state_path(spec, k, kernel)[-1], spec.n_firms)


def loss_term_structure(
    spec: ChainSpec, k: int, kernel: Optional[TransitionMatrix] = None
) -> list[LossDistribution]:
    """k_step_loss for every step 0..k in one pass."""
    return [_collapse_defaults(row, spec.n_firms) for row in _state_path(spec, k, kernel)]


def scaled_chain_spec(spec: ChainSpec, horizon_default_prob: float, steps: int) -> ChainSpec:
    """
    Re-solve eta_F so that a firm's one-step default probability q_step
    compounds to the horizon probability over `steps` periods:
    1 - (1 - q_step)^steps = horizon_default_prob.
    """
    if steps < 1:
        raise DomainException("scaled_chain_spec", "steps must be positive")
    if not 0.0 < horizon_default_prob < 1.0:
        raise DomainException("scaled_chain_spec", "horizon probability outside (0, 1)")
    q_step = -np.expm1(np.log1p(-horizon_default_prob) / steps)
    eta_F = solve_eta_F(float(q_step), spec.n_firms, spec.eta_S, spec.eta_FS)
    return spec.model_copy(update={"eta_F": eta_F})


# ============================================================================
# MONTE CARLO
# ============================================================================

@dataclass(frozen=True)
class PathSet:
    """Cumulative defaults D_0..D_k per simulated path."""
    cumulative_defaults: np.ndarray
    n_firms: int
    seed: int
    metadata: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.cumulative_defaults.shape[0]

    def empirical_distribution(self, step: Optional[int] = None) -> LossDistribution:
        column = self.cumulative_defaults[:, -1 if step is None else step]
        counts = np.bincount(column, minlength=self.n_firms + 1)
        return LossDistribution.from_array(counts / counts.sum())


def _simulate_block(spec: ChainSpec, k: int, seed: int, block: int, size: int) -> np.ndarray:
    rng = block_generator(seed, block)
    n = spec.n_firms
    defaults = np.zeros(size, dtype=np.int64)
    in_system = np.zeros(size, dtype=np.int64)
    history = np.zeros((size, k + 1), dtype=np.int32)
    softplus_with = np.logaddexp(0.0, spec.eta_F + spec.eta_FS)
    softplus_without = np.logaddexp(0.0, spec.eta_F)
    p_with = expit(spec.eta_F + spec.eta_FS)
    p_without = expit(spec.eta_F)
    for step in range(1, k + 1):
        before = in_system
        in_system = in_system - rng.binomial(in_system, spec.removal_prob)
        tilt = in_system if spec.tilt == "post_removal" else before
        healthy = n - defaults
        # P~ is a Bernoulli mixture of two binomials; draw the sector state first.
        log_odds = (
            spec.eta_S
            + tilt * spec.eta_FS
            + healthy * softplus_with
            - healthy * softplus_without
        )
        sector = rng.random(size) < expit(log_odds)
        new = rng.binomial(healthy, np.where(sector, p_with, p_without))
        defaults = defaults + new
        in_system = in_system + new
        history[:, step] = defaults
    return history


def simulate_paths(
    spec: ChainSpec,
    k: int,
    n_paths: int,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    block_size: Optional[int] = None,
) -> PathSet:
    """
    Simulate the chain directly (removal, then sector state, then new
    defaults). Paths are split into fixed blocks with one random stream
    per block, so the output depends on the seed but not on `threads`.
    """
    if n_paths < 1:
        raise DomainException("simulate_paths", "n_paths must be positive")
    if k < 0:
        raise DomainException("simulate_paths", "k must be nonnegative")
    seed = settings.seed if seed is None else seed
    workers = threads or settings.threads
    blocks = list(path_blocks(n_paths, block_size))

    def run(block: tuple[int, int, int]) -> np.ndarray:
        index, _, size = block
        return _simulate_block(spec, k, seed, index, size)

    if workers == 1:
        parts = [run(block) for block in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    logger.info("Simulated %d paths over %d steps in %d block(s)", n_paths, k, len(blocks))
    return PathSet(
        cumulative_defaults=np.concatenate(parts, axis=0),
        n_firms=spec.n_firms,
        seed=seed,
        metadata={"removal_prob": spec.removal_prob, "steps": k},
    )
