"""Physical parameters, pulse sequences and closed-form count rates."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace
from enum import StrEnum
from functools import partial

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .const import (
    DEFAULT_BETA0,
    DEFAULT_DELTA_E,
    DEFAULT_KAPPA,
    DEFAULT_PHI0,
    DEFAULT_S_PUMP,
    DEFAULT_SIGMA,
    DEFAULT_T_PUMP,
    MAX_POLARIZATION,
    REPETITION_PERIOD,
)
from .exceptions import InvalidParameterError

_LOGGER = logging.getLogger(__name__)

CountFunction = Callable[[ArrayLike], NDArray[np.float64] | float]


class SequenceKind(StrEnum):
    """Pulse sequence applied once per pumping cycle."""

    ONE_PULSE = "one_pulse"
    TWO_PULSE = "two_pulse"
    THREE_PULSE = "three_pulse"


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the feedback model in internal units.

    Times are in ns and angular frequencies in rad/ns. ``diffusion_d`` and
    ``alpha`` are in rad^2/ns^3, ``kappa`` and ``beta0`` in 1/ns.
    """

    delta_e: float = DEFAULT_DELTA_E
    diffusion_d: float = 0.0
    kappa: float = DEFAULT_KAPPA
    alpha: float = 0.0
    beta0: float = DEFAULT_BETA0
    sigma: float = DEFAULT_SIGMA
    s_pump: float = DEFAULT_S_PUMP
    t_pump: float = DEFAULT_T_PUMP
    phi0: float = DEFAULT_PHI0

    def __post_init__(self) -> None:
        """Validate the parameter ranges."""
        for name in (
            "delta_e",
            "diffusion_d",
            "kappa",
            "alpha",
            "beta0",
            "sigma",
            "s_pump",
            "t_pump",
            "phi0",
        ):
            _require_finite(name, getattr(self, name))
        if self.diffusion_d < 0:
            raise InvalidParameterError(
                f"diffusion_d must be >= 0, got {self.diffusion_d!r}"
            )
        if self.kappa <= 0:
            raise InvalidParameterError(f"kappa must be > 0, got {self.kappa!r}")
        if self.alpha < 0:
            raise InvalidParameterError(f"alpha must be >= 0, got {self.alpha!r}")
        if self.beta0 < 0:
            raise InvalidParameterError(f"beta0 must be >= 0, got {self.beta0!r}")
        if self.sigma <= 0:
            raise InvalidParameterError(f"sigma must be > 0, got {self.sigma!r}")
        if self.t_pump <= 0:
            raise InvalidParameterError(f"t_pump must be > 0, got {self.t_pump!r}")
        if abs(self.s_pump) > MAX_POLARIZATION:
            raise InvalidParameterError(
                f"s_pump must lie in [-1/2, 1/2], got {self.s_pump!r}"
            )

    def with_alpha(self, alpha: float) -> ModelParams:
        """Return a copy with a different feedback strength."""
        return replace(self, alpha=alpha)


@dataclass(frozen=True)
class SequenceSpec:
    """Pulse sequence with its scan variable.

    ``scan`` is the laser detuning in rad/ns for the one-pulse sequence and
    the delay tau in ns for the two- and three-pulse sequences.
    """

    kind: SequenceKind
    scan: float = 0.0
    echo_half_period: float | None = None
    repetition_period: float = REPETITION_PERIOD

    def __post_init__(self) -> None:
        """Validate the timing of the sequence."""
        _require_finite("scan", self.scan)
        if self.repetition_period <= 0:
            raise InvalidParameterError(
                f"repetition_period must be > 0, got {self.repetition_period!r}"
            )
        if self.kind is SequenceKind.TWO_PULSE and self.scan < 0:
            raise InvalidParameterError(
                f"tau must be >= 0 for the two-pulse sequence, got {self.scan!r}"
            )
        if self.kind is not SequenceKind.THREE_PULSE:
            return
        if self.echo_half_period is None or not self.echo_half_period > 0:
            raise InvalidParameterError(
                "echo_half_period must be > 0 for the three-pulse sequence, "
                f"got {self.echo_half_period!r}"
            )
        periods = self.echo_half_period / self.repetition_period
        if abs(periods - round(periods)) > 1e-9 * max(1.0, periods):
            raise InvalidParameterError(
                f"echo_half_period {self.echo_half_period!r} ns is not a multiple "
                f"of the repetition period {self.repetition_period!r} ns"
            )
        if abs(self.scan) >= self.echo_half_period:
            raise InvalidParameterError(
                f"|tau| must be below echo_half_period, got {self.scan!r}"
            )

    @property
    def scans_detuning(self) -> bool:
        """Return True when the scan variable is a laser detuning."""
        return self.kind is SequenceKind.ONE_PULSE

    @property
    def laser_detuning(self) -> float:
        """Laser detuning of the pumping light, zero unless it is scanned."""
        return self.scan if self.scans_detuning else 0.0

    def with_scan(self, value: float) -> SequenceSpec:
        """Return a copy with a new scan value."""
        return replace(self, scan=float(value))


def _as_output(value: NDArray[np.float64]) -> NDArray[np.float64] | float:
    if np.ndim(value) == 0:
        return float(value)
    return value


def _safe_ratio(
    numerator: NDArray[np.float64], denominator: NDArray[np.float64]
) -> NDArray[np.float64]:
    # denominator 1 - c*x is non-negative and only vanishes together with the numerator
    positive = denominator > 0.0
    return np.where(positive, numerator / np.where(positive, denominator, 1.0), 0.0)


def pump_rate(
    omega: ArrayLike, laser_detuning: float, p: ModelParams
) -> NDArray[np.float64] | float:
    """Return the optical pumping rate beta(omega) in 1/ns."""
    offset = np.asarray(omega, dtype=float) - laser_detuning
    return _as_output(p.beta0 * np.exp(-(offset**2) / (2.0 * p.sigma**2)))


def _pump_rate_and_slope(
    omega: ArrayLike, laser_detuning: float, p: ModelParams
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    offset = np.asarray(omega, dtype=float) - laser_detuning
    beta = p.beta0 * np.exp(-(offset**2) / (2.0 * p.sigma**2))
    return beta, -beta * offset / p.sigma**2


def pump_step(
    s_before: ArrayLike, beta: ArrayLike, p: ModelParams
) -> NDArray[np.float64] | float:
    """Return the polarization after one pumping window.

    Args:
        s_before: Electron polarization when the window opens.
        beta: Pumping rate in 1/ns.
        p: Model parameters supplying S_p and T_p.

    Returns:
        S_a = S_p (1 - e^{-beta T_p}) + S_b e^{-beta T_p}
    """
    x = np.exp(-np.asarray(beta, dtype=float) * p.t_pump)
    return _as_output(p.s_pump * (1.0 - x) + np.asarray(s_before, dtype=float) * x)


def pump_trajectory(
    s_before: float, beta: float, p: ModelParams, times: ArrayLike
) -> NDArray[np.float64]:
    """Return the polarization S(t) inside the pumping window."""
    t = np.asarray(times, dtype=float)
    return p.s_pump + (s_before - p.s_pump) * np.exp(-beta * t)


def _ramsey_phase(omega: ArrayLike, tau: float, p: ModelParams) -> NDArray[np.float64]:
    return p.phi0 + (p.delta_e + np.asarray(omega, dtype=float)) * tau


def count_rate_c1(
    omega: ArrayLike, laser_detuning: float, p: ModelParams
) -> NDArray[np.float64] | float:
    """Return the one-pulse trion count per cycle, 2|S_p| tanh(beta T_p / 2)."""
    beta = np.asarray(pump_rate(omega, laser_detuning, p))
    return _as_output(2.0 * abs(p.s_pump) * np.tanh(beta * p.t_pump / 2.0))


def count_rate_c2(
    omega: ArrayLike, tau: float, p: ModelParams
) -> NDArray[np.float64] | float:
    """Return the two-pulse (Ramsey) trion count per cycle.

    C_2 = |S_p| (1 - x)(1 - c) / (1 - c x) with x = e^{-beta T_p} and
    c = cos(phi_0 + (delta_e + omega) tau).
    """
    beta = np.asarray(pump_rate(omega, 0.0, p))
    x = np.exp(-beta * p.t_pump)
    c = np.cos(_ramsey_phase(omega, tau, p))
    ratio = _safe_ratio((1.0 - x) * (1.0 - c), 1.0 - c * x)
    return _as_output(abs(p.s_pump) * ratio)


def count_rate_c3(
    omega: ArrayLike, tau: float, p: ModelParams
) -> NDArray[np.float64] | float:
    """Return the echo trion count per cycle; the pi pulse doubles the delay."""
    return count_rate_c2(omega, 2.0 * tau, p)


def count_rate(
    kind: SequenceKind, omega: ArrayLike, scan: float, p: ModelParams
) -> NDArray[np.float64] | float:
    """Dispatch to the count rate of the given sequence kind."""
    if kind is SequenceKind.ONE_PULSE:
        return count_rate_c1(omega, scan, p)
    if kind is SequenceKind.TWO_PULSE:
        return count_rate_c2(omega, scan, p)
    return count_rate_c3(omega, scan, p)


def count_function(seq: SequenceSpec, p: ModelParams) -> CountFunction:
    """Return the vectorised map omega -> C_j for a fixed sequence."""
    return partial(count_rate, seq.kind, scan=seq.scan, p=p)


def count_rate_derivative(
    kind: SequenceKind, omega: ArrayLike, scan: float, p: ModelParams
) -> NDArray[np.float64] | float:
    """Return the analytic derivative dC_j/domega.

    Both the pumping rate and the Ramsey phase depend on omega, so the
    two-pulse derivative carries a lineshape term and a fringe term.

    Args:
        kind: Sequence kind selecting C_1, C_2 or C_3.
        omega: Overhauser shift in rad/ns, scalar or array.
        scan: Laser detuning (one-pulse) or delay tau in ns.
        p: Model parameters.

    Returns:
        The derivative in trions per cycle per rad/ns.
    """
    if kind is SequenceKind.ONE_PULSE:
        beta, beta_slope = _pump_rate_and_slope(omega, scan, p)
        decay = np.exp(-beta * p.t_pump)
        sech_squared = 4.0 * decay / (1.0 + decay) ** 2
        return _as_output(abs(p.s_pump) * p.t_pump * beta_slope * sech_squared)

    tau = scan if kind is SequenceKind.TWO_PULSE else 2.0 * scan
    beta, beta_slope = _pump_rate_and_slope(omega, 0.0, p)
    x = np.exp(-beta * p.t_pump)
    x_slope = -p.t_pump * beta_slope * x
    phase = _ramsey_phase(omega, tau, p)
    c = np.cos(phase)
    c_slope = -np.sin(phase) * tau

    numerator = (1.0 - x) * (1.0 - c)
    numerator_slope = -x_slope * (1.0 - c) - (1.0 - x) * c_slope
    denominator = 1.0 - c * x
    denominator_slope = -(c_slope * x + c * x_slope)
    quotient = _safe_ratio(
        numerator_slope * denominator - numerator * denominator_slope,
        denominator**2,
    )
    return _as_output(abs(p.s_pump) * quotient)


def sequence_polarizations(
    seq: SequenceSpec, omega: ArrayLike, p: ModelParams
) -> tuple[NDArray[np.float64] | float, NDArray[np.float64] | float]:
    """Return the steady cycle polarizations (S_b, S_a) around the pumping window.

    S_b is the polarization when pumping starts and S_a when it stops. The
    pulse sequence maps S_a back to S_b: the one-pulse sequence flips it and
    the Ramsey sequences project it by the fringe cosine.
    """
    beta = np.asarray(pump_rate(omega, seq.laser_detuning, p))
    x = np.exp(-beta * p.t_pump)
    if seq.kind is SequenceKind.ONE_PULSE:
        s_after = p.s_pump * (1.0 - x) / (1.0 + x)
        s_before = -s_after
    else:
        tau = seq.scan if seq.kind is SequenceKind.TWO_PULSE else 2.0 * seq.scan
        c = np.cos(_ramsey_phase(omega, tau, p))
        s_after = p.s_pump * _safe_ratio(1.0 - x, 1.0 - c * x)
        s_before = c * s_after
    return _as_output(s_before), _as_output(s_after)


def nuclear_flip_rate_estimate(b_hole: float, b_ext: float, gamma_rad: float) -> float:
    """Return Gamma_n = (b_hole / b_ext)^2 gamma for the hole-mediated flip rate.

    Raises:
        InvalidParameterError: If the external field is not positive.
    """
    if not b_ext > 0:
        raise InvalidParameterError(f"b_ext must be > 0, got {b_ext!r}")
    return (b_hole / b_ext) ** 2 * gamma_rad


def alpha_estimate(gamma_n: Sequence[float], a_n_over_hbar: Sequence[float]) -> float:
    """Return alpha = sum_n Gamma_n (A_n / hbar)^2 in rad^2/ns^3."""
    rates = np.asarray(gamma_n, dtype=float)
    couplings = np.asarray(a_n_over_hbar, dtype=float)
    if rates.shape != couplings.shape:
        raise InvalidParameterError(
            "gamma_n and a_n_over_hbar must have equal length, got "
            f"{rates.size} and {couplings.size}"
        )
    return float(np.sum(rates * couplings**2))
