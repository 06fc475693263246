# tests/conftest.py
"""Shared grids, seeded generators and short trajectories."""
import numpy as np
import pytest

from dynamics.initial_data import InitialDataSpec, make_initial
from dynamics.solver import SolverConfig, evolve
from lab_io.selftest import random_band_limited
from spectral.fields import Trajectory, VectorField3
from spectral.grid import SpectralGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def torus():
    """L = 2*pi, so wavenumbers are the integers."""
    return SpectralGrid(2.0 * np.pi, 256)


@pytest.fixture(scope="session")
def box():
    return SpectralGrid(16.0, 256)


@pytest.fixture(scope="session")
def fine_box():
    return SpectralGrid(16.0, 512)


@pytest.fixture(scope="session")
def bump_spec():
    return InitialDataSpec(family="geodesic_bump")


@pytest.fixture(scope="session")
def twist_spec():
    return InitialDataSpec(family="twist_bump")


@pytest.fixture(scope="session")
def short_config(box):
    return SolverConfig(eps=0.1, final_time=0.2, dt=1e-3, grid=box, output_stride=10)


@pytest.fixture(scope="session")
def short_run(box, twist_spec, short_config):
    """Twisted bump, eps = 0.1, 21 stored slices."""
    return evolve(make_initial(box, twist_spec), short_config)


@pytest.fixture(scope="session")
def fine_run(fine_box, twist_spec):
    cfg = SolverConfig(eps=0.1, final_time=0.2, dt=1e-3, grid=fine_box, output_stride=10)
    return evolve(make_initial(fine_box, twist_spec), cfg)


@pytest.fixture(scope="session")
def constant_run(box, short_config):
    q = np.array([0.0, 0.6, 0.8])
    data = np.repeat(VectorField3.constant(box, q).values[None], 21, axis=0)
    return Trajectory(times=np.arange(21) * short_config.output_dt, data=data, grid=box, config=short_config)


@pytest.fixture
def band_limited(torus, rng):
    """Factory for random real fields on the torus."""

    def make(max_mode=60, decay=1.5):
        return random_band_limited(torus, rng, max_mode, decay)

    return make
