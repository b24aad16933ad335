import numpy as np
import pytest

from hecnn.ckks.params import make_params, preset_params
from hecnn.ckks.scheme import CkksScheme


@pytest.fixture(scope="session")
def tiny_params():
    """Fast, clearly insecure parameters for unit tests."""
    return make_params(ring_degree=256, level=7)


@pytest.fixture(scope="session")
def tiny_scheme(tiny_params):
    return CkksScheme(tiny_params)


@pytest.fixture(scope="session")
def tiny_keys(tiny_scheme):
    return tiny_scheme.keygen(12345)


@pytest.fixture(scope="session")
def mnist_test_params():
    """The deg-4 parameter preset at the reduced test-profile ring degree."""
    return preset_params("mnist-deg4", profile="test-insecure")


@pytest.fixture(scope="session")
def mnist_test_keys(mnist_test_params):
    return CkksScheme(mnist_test_params).keygen(777)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
