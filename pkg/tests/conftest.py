import math

import pytest

from cavitygeom.lattice import CouplingProfile, LatticeConfig

TWO_PI = 2.0 * math.pi


@pytest.fixture
def ring16():
    return LatticeConfig(16, 10_000, TWO_PI * 1530.0, TWO_PI * 290.0, periodic=True)


@pytest.fixture
def chain18():
    return LatticeConfig(18, 10_000, TWO_PI * 1520.0, TWO_PI * 290.0, periodic=False)


@pytest.fixture
def nn_profile():
    return CouplingProfile(16, {1: 1.0}, "nn")
