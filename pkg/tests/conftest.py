import numpy as np
import pytest

from gtlab.zn_core import GridFunction


def rand_grid(modulus, seed, low=-1.0, high=1.0):
    rng = np.random.default_rng(seed)
    return GridFunction(modulus, rng.uniform(low, high, modulus))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
