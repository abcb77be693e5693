import numpy as np
import pytest

from shearflow.geometry import straight_channel, wavy_channel


@pytest.fixture(scope="session")
def straight():
    return straight_channel()


@pytest.fixture(scope="session")
def wavy():
    return wavy_channel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
