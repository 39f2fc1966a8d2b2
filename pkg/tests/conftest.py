import numpy as np
import pytest

from obdoa.geometry import GridSpec, build_dictionary, make_geometry


@pytest.fixture(scope="session")
def sla18():
    return make_geometry("sla18")


@pytest.fixture(scope="session")
def sla10():
    return make_geometry("sla10")


@pytest.fixture(scope="session")
def grid61():
    return GridSpec(-60.0, 60.0, 2.0)


@pytest.fixture(scope="session")
def pair18(sla18, grid61):
    return build_dictionary(sla18, grid61)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
