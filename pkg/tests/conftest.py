import numpy as np
import pytest

from levycal import KouModel, MertonModel, SpectralGrid

T_REF = 0.05
R_REF = 0.02


@pytest.fixture(scope="session")
def merton_model():
    return MertonModel(sigma=0.2, lam=1.0, mu=-0.05, delta=0.05)


@pytest.fixture(scope="session")
def kou_model():
    return KouModel(sigma=0.21, lam=1.4, p=0.04, lam_plus=3.7, lam_minus=1.8)


@pytest.fixture(scope="session")
def merton_triplet(merton_model):
    return merton_model.triplet()


@pytest.fixture(scope="session")
def kou_triplet(kou_model):
    return kou_model.triplet()


@pytest.fixture(scope="session")
def default_grid():
    return SpectralGrid()


@pytest.fixture(scope="session")
def small_grid():
    return SpectralGrid(n=2**10, dw=0.4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
