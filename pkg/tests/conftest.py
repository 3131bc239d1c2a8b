import numpy as np
import pytest

from oracles import box_tris


@pytest.fixture
def cube():
    return box_tris([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
