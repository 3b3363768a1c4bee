"""Shared fixtures: reference parameter sets used across the suite."""

import numpy as np
import pytest

import dotkit as dk

# Fitted rates of the two-emitter resonant data set (1/ns).
REF_GAMMA = 0.7
REF_GAMMA_PD = 2.5
REF_SIGMA = 1.0


@pytest.fixture
def resonant_pair():
    """Two identical resonant emitters with the reference rates."""
    return dk.identical_system(2, REF_GAMMA, REF_GAMMA_PD, REF_SIGMA)


@pytest.fixture
def resonant_trio():
    """Three identical resonant emitters with the faster radiative rate."""
    return dk.identical_system(3, 1.4, REF_GAMMA_PD, REF_SIGMA)


@pytest.fixture
def irf_100ps():
    return dk.Irf(0.1)


@pytest.fixture
def fine_grid():
    """Delay grid fine enough for 100 ps IRF convolutions."""
    return np.arange(-5.0, 5.0 + 1e-9, 0.002)
