"""Exceptions raised by the nuclear feedback toolkit."""

from __future__ import annotations


class SpinFeedbackError(Exception):
    """Base error for every failure raised by this package."""


class InvalidParameterError(SpinFeedbackError, ValueError):
    """A physical or numerical parameter violates its documented range."""


class FokkerPlanckInstabilityError(SpinFeedbackError):
    """Explicit time stepping produced a negative or non-finite density."""

    def __init__(self, step: int, time: float, detail: str = "") -> None:
        """Initialize with the failing step and simulated time."""
        self.step = step
        self.time = time
        message = f"Fokker-Planck integration unstable at step {step} (t={time:.6g} ns)"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class SteadyStateError(SpinFeedbackError):
    """The closed-form steady state is undefined on the requested grid."""


class RelaxationError(SpinFeedbackError):
    """Mean-field relaxation did not settle within the time budget."""

    def __init__(self, last_omega: float, detail: str = "") -> None:
        """Initialize with the last Overhauser shift reached."""
        self.last_omega = last_omega
        message = f"Relaxation did not converge (last omega={last_omega:.12g} rad/ns)"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class SweepError(SpinFeedbackError):
    """A sweep point failed to relax."""

    def __init__(self, index: int, value: float) -> None:
        """Initialize with the failing scan index and value."""
        self.index = index
        self.value = value
        super().__init__(f"Sweep failed at index {index} (scan value {value:.12g})")


class ConfigError(SpinFeedbackError):
    """A configuration file or override could not be resolved."""

    def __init__(self, message: str, field: str | None = None) -> None:
        """Initialize with an optional dotted field path."""
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
