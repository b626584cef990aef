# tests/conftest.py
"""
Pytest configuration and fixtures
"""

import numpy as np
import pytest

from src.config import settings
from src.core.pricing import standard_tranches
from src.schemas import CdoContract, ChainSpec, FirmGraph, ModelParams, SectorParams


@pytest.fixture
def mock_settings():
    """Settings for testing"""
    return settings


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle():
    """The complete graph on three firms"""
    return FirmGraph.triangle()


@pytest.fixture
def triangle_params():
    """(eta_1, eta_2, eta_3, eta_12, eta_13, eta_23)"""
    return ModelParams(eta_node=(0.3, -0.7, 1.1), eta_edge=(0.5, -0.2, 0.9))


@pytest.fixture
def reference_sector():
    """N=125 one-sector model with eta_FS=-2.1, eta_S=15, eta_F=-2"""
    return SectorParams.single(125, eta_S=15.0, eta_FS=-2.1, eta_F=-2.0)


@pytest.fixture
def small_chain():
    return ChainSpec(n_firms=6, eta_S=1.3, eta_FS=-0.8, eta_F=-1.5, removal_prob=0.35)


@pytest.fixture
def fig7_chain():
    """N=50 chain of the removal-probability experiment, p_R filled in per test"""

    def make(removal_prob: float) -> ChainSpec:
        return ChainSpec(
            n_firms=50, eta_S=5.514, eta_FS=-5.0, eta_F=-2.8, removal_prob=removal_prob
        )

    return make


@pytest.fixture
def standard_contract():
    """5-year, semi-annual, r=5%, standard tranche grid"""
    return CdoContract.regular(maturity=5.0, frequency=0.5, rate=0.05, tranches=standard_tranches())


@pytest.fixture
def random_sector(rng):
    """Factory for random multi-sector parameters with small sectors"""

    def make(n_sectors: int, max_size: int = 4, scale: float = 2.0) -> SectorParams:
        sizes = tuple(int(x) for x in rng.integers(1, max_size + 1, size=n_sectors))
        pairs = n_sectors * (n_sectors - 1) // 2
        return SectorParams(
            sector_sizes=sizes,
            eta_S=tuple(rng.normal(0, scale, n_sectors)),
            eta_F=tuple(rng.normal(-1, scale / 2, n_sectors)),
            eta_FS=tuple(rng.normal(0, scale, n_sectors)),
            eta_sector_edge=tuple(rng.normal(0, scale / 2, pairs)) if pairs else (),
        )

    return make
