"""Drift-diffusion evolution of the Overhauser-shift distribution.

The density f(Omega, t) obeys

    df/dt = d/dOmega [ kappa Omega f + (D + alpha C_j(Omega)) df/dOmega ]

with zero flux through both ends of the grid. Fluxes are exponentially
fitted (Scharfetter-Gummel), so the discrete zero-flux state reproduces the
closed-form steady state and both time steppers conserve probability.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .const import (
    BERNOULLI_TAYLOR_LIMIT,
    CFL_DIFFUSION,
    CFL_DRIFT,
    DEFAULT_N_CELLS,
    EVOLVE_METHOD_EXPLICIT,
    EVOLVE_METHOD_IMPLICIT,
    EVOLVE_METHODS,
    GRID_DIFFUSION_WIDTHS,
    GRID_FRINGE_PERIODS,
    GRID_MAX_SIGMA_WIDTHS,
    GRID_SIGMA_WIDTHS,
    MIN_N_CELLS,
    NEGATIVE_DENSITY_TOLERANCE,
    POSITIVITY_SAFETY,
    TWO_PI,
)
from .exceptions import (
    FokkerPlanckInstabilityError,
    InvalidParameterError,
    SteadyStateError,
)
from .model import CountFunction, ModelParams

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class OmegaGrid:
    """Uniform finite-volume grid on [omega_min, omega_max] in rad/ns."""

    omega_min: float
    omega_max: float
    n_cells: int = DEFAULT_N_CELLS

    def __post_init__(self) -> None:
        """Validate the extent and resolution."""
        if not (math.isfinite(self.omega_min) and math.isfinite(self.omega_max)):
            raise InvalidParameterError("grid bounds must be finite")
        if not self.omega_min < self.omega_max:
            raise InvalidParameterError(
                f"omega_min must be below omega_max, got "
                f"[{self.omega_min!r}, {self.omega_max!r}]"
            )
        if self.n_cells < MIN_N_CELLS:
            raise InvalidParameterError(
                f"n_cells must be >= {MIN_N_CELLS}, got {self.n_cells!r}"
            )

    @classmethod
    def symmetric(cls, half_width: float, n_cells: int = DEFAULT_N_CELLS) -> OmegaGrid:
        """Return a grid on [-half_width, half_width]."""
        return cls(-half_width, half_width, n_cells)

    @classmethod
    def default_for(
        cls,
        p: ModelParams,
        tau_min: float = 0.0,
        laser_detuning: float = 0.0,
        n_cells: int = DEFAULT_N_CELLS,
    ) -> OmegaGrid:
        """Return the default symmetric grid for a parameter set.

        The half width covers six pumping linewidths, eight diffusion
        widths sqrt(D / kappa) and three fringe periods 2 pi / tau_min, the
        fringe term capped at twelve linewidths. A one-pulse detuning widens
        the grid by |laser_detuning|.
        """
        half_width = max(
            GRID_SIGMA_WIDTHS * p.sigma,
            GRID_DIFFUSION_WIDTHS * math.sqrt(p.diffusion_d / p.kappa),
        )
        if tau_min > 0:
            fringes = min(
                GRID_FRINGE_PERIODS * TWO_PI / tau_min,
                GRID_MAX_SIGMA_WIDTHS * p.sigma,
            )
            half_width = max(half_width, fringes)
        return cls.symmetric(half_width + abs(laser_detuning), n_cells)

    @property
    def spacing(self) -> float:
        """Cell width h."""
        return (self.omega_max - self.omega_min) / self.n_cells

    @cached_property
    def centers(self) -> NDArray[np.float64]:
        """Cell centres."""
        return self.omega_min + (np.arange(self.n_cells) + 0.5) * self.spacing

    @cached_property
    def interior_faces(self) -> NDArray[np.float64]:
        """Faces between neighbouring cells."""
        return self.omega_min + np.arange(1, self.n_cells) * self.spacing

    def integrate(self, values: ArrayLike) -> float:
        """Return the cell-centred midpoint integral of per-cell values."""
        return float(self.spacing * np.sum(values))


@dataclass(frozen=True)
class NuclearPdf:
    """Cell-averaged probability density of the Overhauser shift, in ns/rad."""

    grid: OmegaGrid
    density: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        """Freeze a validated copy of the density."""
        density = np.array(self.density, dtype=float)
        if density.shape != (self.grid.n_cells,):
            raise InvalidParameterError(
                f"density must have {self.grid.n_cells} cells, "
                f"got shape {density.shape}"
            )
        if not np.all(np.isfinite(density)):
            raise InvalidParameterError("density must be finite")
        if density.min() < -NEGATIVE_DENSITY_TOLERANCE:
            raise InvalidParameterError(
                f"density must be non-negative, got minimum {density.min():.3g}"
            )
        density.setflags(write=False)
        object.__setattr__(self, "density", density)

    @classmethod
    def from_values(cls, grid: OmegaGrid, values: ArrayLike) -> NuclearPdf:
        """Return the pdf proportional to non-negative per-cell values."""
        values = np.asarray(values, dtype=float)
        mass = grid.integrate(values)
        if not mass > 0 or not math.isfinite(mass):
            raise InvalidParameterError(f"cannot normalise values with mass {mass!r}")
        return cls(grid, values / mass)

    @classmethod
    def gaussian(cls, grid: OmegaGrid, mean: float, std: float) -> NuclearPdf:
        """Return a normal density sampled at the cell centres."""
        if not std > 0:
            raise InvalidParameterError(f"std must be > 0, got {std!r}")
        values = np.exp(-((grid.centers - mean) ** 2) / (2 * std**2))
        return cls.from_values(grid, values)

    @classmethod
    def point_mass(cls, grid: OmegaGrid, omega: float) -> NuclearPdf:
        """Return all probability in the cell containing omega."""
        if not grid.omega_min <= omega <= grid.omega_max:
            raise InvalidParameterError(
                f"omega {omega!r} lies outside the grid "
                f"[{grid.omega_min!r}, {grid.omega_max!r}]"
            )
        index = min(int((omega - grid.omega_min) / grid.spacing), grid.n_cells - 1)
        values = np.zeros(grid.n_cells)
        values[index] = 1.0
        return cls.from_values(grid, values)

    @property
    def mass(self) -> float:
        """Total probability."""
        return self.grid.integrate(self.density)


def moments(pdf: NuclearPdf) -> tuple[float, float]:
    """Return the mean and variance of the distribution."""
    omega = pdf.grid.centers
    mean = pdf.grid.integrate(omega * pdf.density)
    variance = pdf.grid.integrate((omega - mean) ** 2 * pdf.density)
    return mean, variance


def expected_count(pdf: NuclearPdf, countfn: CountFunction) -> float:
    """Return the count rate averaged over the distribution."""
    counts = np.broadcast_to(countfn(pdf.grid.centers), pdf.density.shape)
    return pdf.grid.integrate(counts * pdf.density)


def l1_distance(first: NuclearPdf, second: NuclearPdf) -> float:
    """Return the L1 distance between two pdfs on the same grid."""
    if first.grid != second.grid:
        raise InvalidParameterError("pdfs must share a grid")
    return first.grid.integrate(np.abs(first.density - second.density))


def bernoulli(x: ArrayLike) -> NDArray[np.float64]:
    """Return B(x) = x / (exp(x) - 1) without overflow or cancellation."""
    x = np.asarray(x, dtype=float)
    result = np.empty_like(x)
    small = np.abs(x) < BERNOULLI_TAYLOR_LIMIT
    result[small] = 1.0 - x[small] / 2.0 + x[small] ** 2 / 12.0
    positive = ~small & (x > 0)
    xp = x[positive]
    result[positive] = xp * np.exp(-xp) / -np.expm1(-xp)
    negative = ~small & (x < 0)
    result[negative] = x[negative] / np.expm1(x[negative])
    return result


def _diffusivity(
    omega: NDArray[np.float64], countfn: CountFunction, p: ModelParams
) -> NDArray[np.float64]:
    counts = np.broadcast_to(countfn(omega), omega.shape)
    return p.diffusion_d + p.alpha * counts


def _face_coefficients(
    grid: OmegaGrid, countfn: CountFunction, p: ModelParams
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return (a, b) with face flux J = a f_left - b f_right.

    The physical drift velocity is -kappa Omega. Where the diffusivity
    vanishes the coefficients reduce to pure upwinding.
    """
    faces = grid.interior_faces
    h = grid.spacing
    velocity = -p.kappa * faces
    diffusivity = _diffusivity(faces, countfn, p)
    upwind_left = np.maximum(velocity, 0.0)
    upwind_right = np.maximum(-velocity, 0.0)
    diffusive = diffusivity > 0.0
    d_safe = np.where(diffusive, diffusivity, 1.0)
    peclet = velocity * h / d_safe
    fitted_left = d_safe / h * bernoulli(-peclet)
    fitted_right = d_safe / h * bernoulli(peclet)
    a = np.where(diffusive, fitted_left, upwind_left)
    b = np.where(diffusive, fitted_right, upwind_right)
    return a, b


def _rate_of_change(
    density: NDArray[np.float64],
    a: NDArray[np.float64],
    b: NDArray[np.float64],
    h: float,
) -> NDArray[np.float64]:
    flux = a * density[:-1] - b * density[1:]
    change = np.zeros_like(density)
    change[:-1] -= flux
    change[1:] += flux
    return change / h


def _outflow_rates(
    a: NDArray[np.float64], b: NDArray[np.float64], h: float
) -> NDArray[np.float64]:
    outflow = np.zeros(a.size + 1)
    outflow[:-1] += a
    outflow[1:] += b
    return outflow / h


def stable_time_step(grid: OmegaGrid, countfn: CountFunction, p: ModelParams) -> float:
    """Return the largest explicit time step in ns that keeps the scheme stable.

    The step satisfies dt <= 0.4 h^2 / max(D + alpha C), dt <= 0.4 h /
    (kappa Omega_max) and keeps every diagonal entry of the update positive.
    """
    h = grid.spacing
    limits = [CFL_DRIFT * h / (p.kappa * max(abs(grid.omega_min), abs(grid.omega_max)))]
    max_diffusivity = float(np.max(_diffusivity(grid.interior_faces, countfn, p)))
    if max_diffusivity > 0:
        limits.append(CFL_DIFFUSION * h**2 / max_diffusivity)
    a, b = _face_coefficients(grid, countfn, p)
    max_outflow = float(np.max(_outflow_rates(a, b, h)))
    if max_outflow > 0:
        limits.append(POSITIVITY_SAFETY / max_outflow)
    return min(limits)


def _implicit_matrix(
    a: NDArray[np.float64], b: NDArray[np.float64], h: float, dt: float
) -> NDArray[np.float64]:
    n = a.size + 1
    banded = np.zeros((3, n))
    banded[0, 1:] = -dt * b / h
    banded[1, :] = 1.0 + dt * _outflow_rates(a, b, h)
    banded[2, :-1] = -dt * a / h
    return banded


def evolve(
    pdf: NuclearPdf,
    countfn: CountFunction,
    p: ModelParams,
    dt: float,
    t_end: float,
    method: str = EVOLVE_METHOD_EXPLICIT,
) -> NuclearPdf:
    """Evolve the density to time t_end.

    The interval is split into ceil(t_end / dt) equal steps. The explicit
    method requires dt below ``stable_time_step``; the implicit method is
    backward Euler with a banded solve and accepts any positive dt.

    Args:
        pdf: Initial distribution.
        countfn: Vectorised count rate C_j(Omega) driving trion diffusion.
        p: Model parameters.
        dt: Requested time step in ns.
        t_end: Final time in ns.
        method: ``explicit`` or ``implicit``.

    Returns:
        The distribution at t_end.

    Raises:
        InvalidParameterError: If dt, t_end or method is invalid.
        FokkerPlanckInstabilityError: If a step produces a negative or
            non-finite density.
    """
    if method not in EVOLVE_METHODS:
        raise InvalidParameterError(
            f"method must be one of {EVOLVE_METHODS}, got {method!r}"
        )
    if not dt > 0 or not math.isfinite(dt):
        raise InvalidParameterError(f"dt must be > 0, got {dt!r}")
    if not t_end >= 0 or not math.isfinite(t_end):
        raise InvalidParameterError(f"t_end must be >= 0, got {t_end!r}")
    if t_end == 0:
        return pdf

    grid = pdf.grid
    h = grid.spacing
    n_steps = max(1, math.ceil(t_end / dt - 1e-12))
    step = t_end / n_steps
    a, b = _face_coefficients(grid, countfn, p)

    banded = None
    if method == EVOLVE_METHOD_EXPLICIT:
        limit = stable_time_step(grid, countfn, p)
        if step > limit * (1.0 + 1e-12):
            raise InvalidParameterError(
                f"dt={step:.6g} ns exceeds the explicit stability limit {limit:.6g} ns"
            )
    else:
        banded = _implicit_matrix(a, b, h, step)

    _LOGGER.debug(
        "Evolving %d %s steps of %.6g ns on %d cells",
        n_steps,
        method,
        step,
        grid.n_cells,
    )
    density = np.array(pdf.density, dtype=float)
    milestone = 0
    clamped = 0
    deepest = 0.0
    for index in range(1, n_steps + 1):
        if banded is None:
            density = density + step * _rate_of_change(density, a, b, h)
        else:
            density = solve_banded((1, 1), banded, density)

        if not np.all(np.isfinite(density)):
            raise FokkerPlanckInstabilityError(
                index, index * step, "non-finite density"
            )
        lowest = float(density.min())
        if lowest < -NEGATIVE_DENSITY_TOLERANCE * max(1.0, float(density.max())):
            raise FokkerPlanckInstabilityError(
                index, index * step, f"density reached {lowest:.3g}"
            )
        if lowest < 0.0:
            clamped += 1
            deepest = min(deepest, lowest)
            np.maximum(density, 0.0, out=density)

        progress = 100 * index // n_steps
        if n_steps >= 100 and progress >= milestone + 25:
            milestone = progress - progress % 25
            _LOGGER.debug(
                "Evolution %d%% complete (t=%.6g ns)", milestone, index * step
            )

    if clamped:
        _LOGGER.warning(
            "Clamped negative density to zero in %d of %d steps (lowest %.3g)",
            clamped,
            n_steps,
            deepest,
        )
    return NuclearPdf(grid, density)


def steady_state_closed_form(
    countfn: CountFunction, p: ModelParams, grid: OmegaGrid
) -> NuclearPdf:
    """Return the zero-flux steady state.

    f(Omega) is proportional to exp(-kappa * integral_0^Omega u / (D + alpha
    C_j(u)) du), the inner integral taken by cumulative trapezoid over the
    cell centres.

    Raises:
        SteadyStateError: If D + alpha C_j vanishes anywhere on the grid.
    """
    omega = grid.centers
    diffusivity = _diffusivity(omega, countfn, p)
    if not np.all(diffusivity > 0):
        where = omega[np.argmin(diffusivity)]
        raise SteadyStateError(
            f"D + alpha*C vanishes at omega={where:.6g} rad/ns; "
            "the steady state needs positive diffusion everywhere"
        )
    exponent = -p.kappa * cumulative_trapezoid(omega / diffusivity, omega, initial=0.0)
    exponent -= exponent.max()
    return NuclearPdf.from_values(grid, np.exp(exponent))


def ornstein_uhlenbeck_moments(
    mean0: float, var0: float, p: ModelParams, t: float
) -> tuple[float, float]:
    """Return the analytic mean and variance for alpha = 0."""
    decay = math.exp(-p.kappa * t)
    variance = p.diffusion_d / p.kappa * (1.0 - decay**2) + var0 * decay**2
    return mean0 * decay, variance


def dephasing_time(p: ModelParams) -> float:
    """Return T2* = sqrt(2 kappa / D) for a Gaussian of variance D / kappa."""
    if p.diffusion_d == 0:
        return math.inf
    return math.sqrt(2.0 * p.kappa / p.diffusion_d)
