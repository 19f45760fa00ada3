import numpy as np
import pytest

from popenergy.grids import Prior, RateTarget, StimulusGrid


@pytest.fixture(scope="session")
def grid256():
    return StimulusGrid.uniform(-90.0, 90.0, 256, periodic=True)


@pytest.fixture(scope="session")
def uniform_prior(grid256):
    return Prior.uniform(grid256)


@pytest.fixture(scope="session")
def peaked_prior(grid256):
    return Prior.cosine_peaked(grid256)


@pytest.fixture(scope="session")
def unit_target(grid256):
    return RateTarget.constant(grid256, 1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260816)
