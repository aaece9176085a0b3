import numpy as np
import pytest

from crlab.lattice import get_lattice
from crlab.operators import Structure


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


@pytest.fixture(params=[2, 4, 8], ids=lambda n: f"N{n}")
def lattice(request):
    return get_lattice(request.param)


@pytest.fixture
def lat4():
    return get_lattice(4)


@pytest.fixture
def lat8():
    return get_lattice(8)


def structure(N, rho):
    return Structure.from_formula(N, rho)
