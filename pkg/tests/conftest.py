import numpy as np
import pytest

from shrinktori import ConformalStructure, GridSpec, clifford_seed


@pytest.fixture(scope="session")
def grid32():
    return GridSpec(32, 32)


@pytest.fixture(scope="session")
def grid64():
    return GridSpec(64, 64)


@pytest.fixture(scope="session")
def clifford32(grid32):
    return clifford_seed(grid32)


@pytest.fixture(scope="session")
def clifford64(grid64):
    return clifford_seed(grid64)


@pytest.fixture(scope="session")
def tau_square():
    return ConformalStructure(0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(np.random.Philox(20240817))
