import numpy as np
import pytest

import flowlab as fl
from flowlab.sampling import rng_for


@pytest.fixture(scope="session")
def cat_map():
    return fl.make_cat_map()


@pytest.fixture(scope="session")
def golden_rotation():
    return fl.make_rotation(fl.GOLDEN_ANGLE)


@pytest.fixture(scope="session")
def cat_flow(cat_map):
    return fl.SuspensionFlow(cat_map)


@pytest.fixture(scope="session")
def marked_point():
    return fl.SuspensionPoint(
        fl.TorusPoint((np.sqrt(2.0) - 1.0, np.sqrt(3.0) - 1.0)), 0.0
    )


@pytest.fixture(scope="session")
def quad_field(cat_map, marked_point):
    return fl.quadratic_field(cat_map, marked_point, 0.2)


@pytest.fixture(scope="session")
def small_cat_cloud(cat_map):
    return fl.birkhoff_cloud(cat_map, 6000, rng=rng_for(7, 1), chains=64)
