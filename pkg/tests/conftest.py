import pytest

from asymptex.expansion import build_expansion
from asymptex.fixtures import almost_periodic_example, decaying_example, periodic_example


@pytest.fixture(scope="session")
def periodic():
    return periodic_example()


@pytest.fixture(scope="session")
def periodic_k3(periodic):
    return build_expansion(periodic, 3)


@pytest.fixture(scope="session")
def decaying():
    return decaying_example()


@pytest.fixture(scope="session")
def almost_periodic():
    return almost_periodic_example()


@pytest.fixture(scope="session")
def almost_periodic_k3(almost_periodic):
    return build_expansion(almost_periodic, 3)
