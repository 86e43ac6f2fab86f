import numpy as np
import pytest

from tomosar.core import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def small_grid():
    from tomosar.core import GeoGrid

    return GeoGrid((-1.0, -1.0), 0.2, 11, 11, (0.0, 0.3))


def assert_close(a, b, tol):
    assert np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol
