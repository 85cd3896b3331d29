"""Rotation angle and AC Stark phase of a detuned control pulse."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson

from .const import GAUSSIAN_SUPPORT_WIDTHS, PULSE_QUADRATURE_POINTS
from .exceptions import InvalidParameterError


class EnvelopeShape(StrEnum):
    """Temporal shape of the Rabi frequency."""

    GAUSSIAN = "gaussian"
    SQUARE = "square"


@dataclass(frozen=True)
class PulseEnvelope:
    """Pulse with peak Rabi frequency, duration and detuning from the trion.

    For the Gaussian shape ``duration`` is the rms width of Omega(t); the
    square pulse is on for ``duration`` ns.
    """

    rabi_peak: float
    duration: float
    detuning: float
    shape: EnvelopeShape = EnvelopeShape.GAUSSIAN

    def __post_init__(self) -> None:
        """Validate the envelope."""
        for name in ("rabi_peak", "duration", "detuning"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if self.duration <= 0:
            raise InvalidParameterError(
                f"duration must be > 0, got {self.duration!r}"
            )
        if self.detuning == 0:
            raise InvalidParameterError("detuning must be non-zero")

    def support(self, points: int = PULSE_QUADRATURE_POINTS) -> NDArray[np.float64]:
        """Return the quadrature times covering the envelope."""
        if self.shape is EnvelopeShape.SQUARE:
            return np.linspace(0.0, self.duration, points)
        half_width = GAUSSIAN_SUPPORT_WIDTHS * self.duration
        return np.linspace(-half_width, half_width, points)

    def rabi(self, times: NDArray[np.float64]) -> NDArray[np.float64]:
        """Return Omega(t) on the given times."""
        if self.shape is EnvelopeShape.SQUARE:
            inside = (times >= 0.0) & (times <= self.duration)
            return np.where(inside, self.rabi_peak, 0.0)
        return self.rabi_peak * np.exp(-(times**2) / (2.0 * self.duration**2))


def _integrate(
    env: PulseEnvelope, integrand: Callable[[NDArray[np.float64]], NDArray[np.float64]]
) -> float:
    if env.shape is EnvelopeShape.SQUARE:
        return env.duration * float(integrand(np.asarray(env.rabi_peak, dtype=float)))
    times = env.support()
    return float(simpson(integrand(env.rabi(times)), x=times))


def rotation_angle(env: PulseEnvelope) -> float:
    """Return the first-order rotation angle, the integral of Omega^2 / Delta."""
    return _integrate(env, lambda rabi: rabi**2 / env.detuning)


def stark_phase(env: PulseEnvelope) -> float:
    """Return the integrated AC Stark shift of the bright state.

    delta_omega = (Delta / 2)(sqrt(1 + 4 Omega^2 / Delta^2) - 1), evaluated in
    the equivalent form 2 Omega^2 / (Delta (sqrt(1 + 4 Omega^2 / Delta^2) + 1))
    which avoids cancellation at large detuning. A square pulse gives the
    duration times the shift at its peak; other shapes use quadrature.
    """
    delta = env.detuning

    def shift(rabi: NDArray[np.float64]) -> NDArray[np.float64]:
        root = np.sqrt(1.0 + 4.0 * rabi**2 / delta**2)
        return 2.0 * rabi**2 / (delta * (root + 1.0))

    return _integrate(env, shift)
