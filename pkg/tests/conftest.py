import numpy as np
import pytest

from nlwlab.randomizer import randomize, sample_coefficients, synthesize_data, draw_seed
from nlwlab.spectral import UnitPartition, make_grid


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 2)


@pytest.fixture(scope="session")
def part16(grid16):
    return UnitPartition(grid16)


@pytest.fixture(scope="session")
def data16(part16):
    return synthesize_data(0.75, 10.0, partition=part16)


@pytest.fixture(scope="session")
def rdata16(data16, part16):
    return randomize(data16, sample_coefficients("gaussian", draw_seed(11, 0), part16.k_max), part16)


def random_real_field(grid, seed):
    from nlwlab.spectral import transform

    rng = np.random.default_rng(seed)
    return transform(rng.standard_normal(grid.shape), grid)
