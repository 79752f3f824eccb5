import numpy as np
import pytest

from kff.grid import build_grid
from kff.model import ModelParams
from kff.operator import MagneticPotential, assemble
from kff.stationary import solve_ground_state

POTENTIALS = {
    "zero": MagneticPotential.zero(),
    "constant": MagneticPotential.constant(1.0),
    "affine": MagneticPotential.affine(0.5, 0.3),
}


@pytest.fixture(scope="session")
def base_params():
    return ModelParams(s=0.4, p=4.0, C=1.0, m0=1.0, theta=1.5, mu=1.5, gamma=4.0, a_kirchhoff=0.0)


@pytest.fixture(scope="session")
def form64():
    return assemble(build_grid(-1.0, 1.0, 64, 0.4))


@pytest.fixture(scope="session")
def form128():
    return assemble(build_grid(-1.0, 1.0, 128, 0.4))


@pytest.fixture(scope="session")
def ground64(form64, base_params):
    return solve_ground_state(form64, base_params, restarts=2)


@pytest.fixture(scope="session")
def ground128(form128, base_params):
    return solve_ground_state(form128, base_params, restarts=2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_state(rng, n, scale=1.0):
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
