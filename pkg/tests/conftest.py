"""Fixtures for nuclear feedback tests."""

import numpy as np
import pytest

from nuclear_feedback.const import TWO_PI
from nuclear_feedback.model import ModelParams, SequenceKind, SequenceSpec


@pytest.fixture
def fid_params():
    """Two-pulse parameters: kappa/alpha = 1e4 ps^2, beta0 = 3/T_p."""
    return ModelParams(
        delta_e=TWO_PI * 25.3,
        kappa=1.0,
        alpha=100.0,
        beta0=3.0 / 26.0,
        sigma=TWO_PI * 1.6,
        s_pump=0.5,
        t_pump=26.0,
    )


@pytest.fixture
def echo_params():
    """Echo parameters: D/kappa = 0.3, alpha/kappa = 1e3, beta0 = 0.1/T_p."""
    return ModelParams(
        delta_e=TWO_PI * 25.3,
        diffusion_d=0.3,
        kappa=1.0,
        alpha=1e3,
        beta0=0.1 / 26.0,
        sigma=TWO_PI * 1.6,
        s_pump=0.5,
        t_pump=26.0,
    )


@pytest.fixture
def one_pulse_params():
    """One-pulse parameters: kappa/alpha = 3e4 ps^2 and a 0.25 GHz linewidth."""
    return ModelParams(
        delta_e=TWO_PI * 25.3,
        kappa=1.0,
        alpha=1.0 / 0.03,
        beta0=3.0 / 26.0,
        sigma=TWO_PI * 0.25,
        s_pump=0.5,
        t_pump=26.0,
    )


@pytest.fixture
def one_pulse():
    """One-pulse sequence at zero detuning."""
    return SequenceSpec(SequenceKind.ONE_PULSE)


@pytest.fixture
def two_pulse():
    """Ramsey sequence at zero delay."""
    return SequenceSpec(SequenceKind.TWO_PULSE)


@pytest.fixture
def three_pulse():
    """Echo sequence with T = 13 ns."""
    return SequenceSpec(SequenceKind.THREE_PULSE, echo_half_period=13.0)


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(20240611)
