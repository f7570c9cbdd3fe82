import numpy as np
import pytest

from czlab.lattice import GridFunction, ProductLattice


def random_grid(lattice: ProductLattice, seed, real=False) -> GridFunction:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(lattice.shape)
    if not real:
        v = v + 1j * rng.standard_normal(lattice.shape)
    return GridFunction(lattice, v)


@pytest.fixture
def line16():
    return ProductLattice((1,), (16,))


@pytest.fixture
def plane16():
    return ProductLattice((2,), (16, 16))


@pytest.fixture
def biparam8():
    # t = 2, d = (1, 1), N = 8
    return ProductLattice((1, 1), (8, 8))
