import numpy as np
import pytest

from src.ensemble import EnsembleConfig
from src.lattice import build_lattice
from src.utils.rng import derive_stream


@pytest.fixture
def lattice3():
    return build_lattice(3)


@pytest.fixture
def lattice7():
    return build_lattice(7)


@pytest.fixture
def rng():
    return derive_stream(12345, 1, 0)


@pytest.fixture
def small_config():
    return EnsembleConfig(
        side_length=3,
        m_values=(1, 2),
        realizations=4,
        seed=42,
        threads=1,
    )


@pytest.fixture
def random_occupation():
    """Factory of random bond subsets, each with its own occupation probability."""

    def draw(topology, rng, count):
        configurations = []
        for _ in range(count):
            p = rng.random()
            configurations.append(tuple(int(b) for b in np.flatnonzero(rng.random(topology.bond_count) < p)))
        return configurations

    return draw
