import pytest

from signalsim import netmodel as nm
from snaphelpers import build_snapshot


@pytest.fixture(scope="session")
def grid1():
    return nm.build_synthetic_grid(1, 1, 1, 300.0, 16.67)


@pytest.fixture(scope="session")
def grid2():
    return nm.build_synthetic_grid(2, 2, 1, 300.0, 16.67)


@pytest.fixture(scope="session")
def make_snapshot():
    return build_snapshot
