"""Shared fixtures: default domain, solver, and noise configurations."""

import numpy as np
import pytest

from kickflow import DomainSpec, NoiseSpec, SolverConfig


@pytest.fixture
def spec():
    return DomainSpec(length=4.0, viscosity=0.1)


@pytest.fixture
def cfg():
    return SolverConfig()


@pytest.fixture
def fast_cfg():
    """Coarse substep for tests where first-order accuracy is enough."""
    return SolverConfig(dt=0.01)


@pytest.fixture
def noise():
    return NoiseSpec()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
