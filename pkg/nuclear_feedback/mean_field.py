"""Mean-field dynamics of the Overhauser shift, fixed points and sweeps."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import brentq, newton

from .const import (
    BASIN_CHECK_POINTS,
    BRACKET_MARGIN,
    BRACKET_PROBE_POINTS,
    BRACKET_SIGMA_WIDTHS,
    COL_COUNT,
    COL_JUMPED,
    COL_OMEGA_F,
    COL_SCAN_VALUE,
    DEFAULT_N_SCAN,
    DIRECTION_DOWN,
    DIRECTION_UP,
    JUMP_FACTOR,
    JUMP_MIN_FRACTION,
    RELAX_ATOL,
    RELAX_CHUNK_TIME,
    RELAX_EVENT_FRACTION,
    RELAX_MAX_TIME,
    RELAX_RTOL,
    RELAX_TOLERANCE,
    ROOT_TOLERANCE,
    ROOT_XTOL,
    SLOPE_STEP,
)
from .exceptions import InvalidParameterError, RelaxationError, SweepError
from .model import (
    ModelParams,
    SequenceKind,
    SequenceSpec,
    count_rate,
    count_rate_derivative,
)

_LOGGER = logging.getLogger(__name__)


class Stability(StrEnum):
    """Linear stability of a fixed point."""

    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class FixedPoint:
    """Root of the mean-field drift."""

    omega: float
    stability: Stability
    drift_slope: float


@dataclass(frozen=True)
class FixedPointSet:
    """All fixed points found in a bracket, ordered by omega."""

    points: tuple[FixedPoint, ...]

    def __iter__(self) -> Iterator[FixedPoint]:
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def stable(self) -> tuple[FixedPoint, ...]:
        """Stable fixed points only."""
        return tuple(pt for pt in self.points if pt.stability is Stability.STABLE)


@dataclass(frozen=True)
class SweepRecord:
    """Quasi-equilibrium reached at one scan value."""

    scan_value: float
    omega_f: float
    count: float
    jumped: bool = False


def _scan_direction(steps: NDArray[np.float64], direction: str | None) -> str:
    ordered = DIRECTION_DOWN if steps.size and steps[0] < 0 else DIRECTION_UP
    if direction is None:
        return ordered
    if direction not in (DIRECTION_UP, DIRECTION_DOWN):
        raise InvalidParameterError(
            f"sweep direction must be up or down, got {direction!r}"
        )
    if steps.size and direction != ordered:
        raise InvalidParameterError(f"scan values run {ordered}, not {direction}")
    return direction


@dataclass(frozen=True)
class SweepTrace:
    """Directional continuation sweep."""

    kind: SequenceKind
    records: tuple[SweepRecord, ...]
    direction: str | None = None

    def __post_init__(self) -> None:
        """Check that scan values are strictly monotone and settle the direction.

        Without an explicit direction, increasing scans are ``up`` and
        decreasing ones ``down``. A single point has no order of its own and
        takes the direction it was swept in, ``up`` if none is given.
        """
        steps = np.diff(self.scan_values)
        if steps.size and not (np.all(steps > 0) or np.all(steps < 0)):
            raise InvalidParameterError("sweep scan values must be strictly monotone")
        object.__setattr__(self, "direction", _scan_direction(steps, self.direction))

    @property
    def scan_values(self) -> NDArray[np.float64]:
        return np.array([record.scan_value for record in self.records], dtype=float)

    @property
    def omega_f(self) -> NDArray[np.float64]:
        return np.array([record.omega_f for record in self.records], dtype=float)

    @property
    def counts(self) -> NDArray[np.float64]:
        return np.array([record.count for record in self.records], dtype=float)

    @property
    def jumped(self) -> NDArray[np.bool_]:
        return np.array([record.jumped for record in self.records], dtype=bool)

    def to_frame(self) -> pd.DataFrame:
        """Return the trace as a table with the sweep CSV columns."""
        return pd.DataFrame(
            {
                COL_SCAN_VALUE: self.scan_values,
                COL_OMEGA_F: self.omega_f,
                COL_COUNT: self.counts,
                COL_JUMPED: self.jumped,
            }
        )

    def to_csv(self, path: Path) -> Path:
        """Write the trace to CSV and return the path."""
        self.to_frame().to_csv(path, index=False, float_format="%.12g")
        return path


def drift(
    omega: ArrayLike, seq: SequenceSpec, p: ModelParams
) -> NDArray[np.float64] | float:
    """Return d omega / dt = -kappa omega + alpha C_j'(omega)."""
    omega = np.asarray(omega, dtype=float)
    result = -p.kappa * omega + p.alpha * np.asarray(
        count_rate_derivative(seq.kind, omega, seq.scan, p)
    )
    return float(result) if result.ndim == 0 else result


def drift_slope(omega: float, seq: SequenceSpec, p: ModelParams) -> float:
    """Return d(drift)/d omega by central difference."""
    step = SLOPE_STEP * max(1.0, abs(omega))
    return (drift(omega + step, seq, p) - drift(omega - step, seq, p)) / (2.0 * step)


def default_bracket(seq: SequenceSpec, p: ModelParams) -> tuple[float, float]:
    """Return a bracket containing every fixed point.

    Roots obey |omega| = (alpha / kappa) |C_j'(omega)|, so a symmetric
    bracket of half width (alpha / kappa) max|C_j'| plus a margin holds them
    all. C_j' is negligible beyond ten linewidths from the pumping centre.
    """
    reach = abs(seq.laser_detuning) + BRACKET_SIGMA_WIDTHS * p.sigma
    probe = np.linspace(-reach, reach, BRACKET_PROBE_POINTS)
    peak = float(np.max(np.abs(count_rate_derivative(seq.kind, probe, seq.scan, p))))
    half_width = BRACKET_MARGIN * p.alpha / p.kappa * peak + p.sigma
    return -half_width, half_width


def _flows_into(start: float, target: float, seq: SequenceSpec, p: ModelParams) -> bool:
    # in one dimension the flow from start reaches target iff drift keeps the sign of
    # (target - start) on the open segment between them
    direction = math.copysign(1.0, target - start)
    probe = np.linspace(start, target, BASIN_CHECK_POINTS)[:-1]
    return bool(np.all(direction * np.asarray(drift(probe, seq, p)) > 0))


def _root_xtol(omega: float) -> float:
    return ROOT_XTOL * max(1.0, abs(omega))


def _newton_polish(
    omega: float, seq: SequenceSpec, p: ModelParams, tol: float
) -> float | None:
    try:
        root = float(
            newton(
                lambda x: drift(x, seq, p),
                omega,
                fprime=lambda x: drift_slope(x, seq, p),
                tol=_root_xtol(omega),
                maxiter=50,
            )
        )
    except (RuntimeError, ZeroDivisionError, OverflowError) as err:
        _LOGGER.warning("Newton polish from %.12g failed: %s", omega, err)
        return None
    if not math.isfinite(root) or abs(drift(root, seq, p)) > tol:
        _LOGGER.warning("Newton polish from %.12g left drift above tol", omega)
        return None
    if drift_slope(root, seq, p) >= 0:
        _LOGGER.warning("Newton polish landed on unstable root %.12g", root)
        return None
    if root != omega and not _flows_into(omega, root, seq, p):
        _LOGGER.warning(
            "Newton root %.12g is outside the basin of %.12g", root, omega
        )
        return None
    return root


def _bracket_downstream(
    omega: float, seq: SequenceSpec, p: ModelParams, tol: float
) -> float | None:
    # the attractor of omega is the first root met along the flow; steps double
    # from the root tolerance until the drift changes sign
    heading = math.copysign(1.0, drift(omega, seq, p))
    low, high = default_bracket(seq, p)
    reach = (high - omega) if heading > 0 else (omega - low)
    inner = omega
    step = _root_xtol(omega)
    while step < reach:
        outer = omega + heading * step
        if heading * drift(outer, seq, p) <= 0:
            root = float(
                brentq(
                    lambda x: drift(x, seq, p),
                    min(inner, outer),
                    max(inner, outer),
                    xtol=_root_xtol(outer),
                    maxiter=200,
                )
            )
            if abs(drift(root, seq, p)) <= tol and _flows_into(omega, root, seq, p):
                return root
            return None
        inner = outer
        step *= 2.0
    return None


def relax_to_steady(
    omega0: float,
    seq: SequenceSpec,
    p: ModelParams,
    tol: float | None = None,
    max_time: float | None = None,
) -> float:
    """Integrate the mean-field equation until the drift falls to tol.

    The attractor is selected by the dynamics from omega0. Integration runs
    in chunks with an adaptive Runge-Kutta scheme that stops once the drift
    drops to half of tol. Between chunks a Newton step may finish the
    approach once the root is known to lie in the basin. A chunk that stops
    on the drift event yet leaves the drift above tol, or that no longer
    moves omega, is finished by bracketing the first root downstream.

    Args:
        omega0: Starting Overhauser shift in rad/ns.
        seq: Pulse sequence at the current scan value.
        p: Model parameters.
        tol: Drift tolerance in rad/ns per ns, defaults to 1e-8 kappa.
        max_time: Integration budget in ns, defaults to 1e4 / kappa. Every
            chunk is charged in full against it.

    Returns:
        The quasi-equilibrium Overhauser shift.

    Raises:
        InvalidParameterError: If tol is not positive.
        RelaxationError: If the drift does not settle within max_time.
    """
    tol = RELAX_TOLERANCE * p.kappa if tol is None else tol
    if not tol > 0:
        raise InvalidParameterError(f"tol must be > 0, got {tol!r}")
    max_time = RELAX_MAX_TIME / p.kappa if max_time is None else max_time
    chunk = min(RELAX_CHUNK_TIME / p.kappa, max_time)
    n_chunks = max(1, math.ceil(max_time / chunk - 1e-9))

    omega = float(omega0)
    if abs(drift(omega, seq, p)) <= tol:
        return omega

    def rhs(_t: float, y: NDArray[np.float64]) -> list[float]:
        return [drift(y[0], seq, p)]

    def settled(_t: float, y: NDArray[np.float64]) -> float:
        return abs(drift(y[0], seq, p)) - RELAX_EVENT_FRACTION * tol

    settled.terminal = True
    settled.direction = -1

    for done in range(1, n_chunks + 1):
        start = omega
        solution = solve_ivp(
            rhs,
            (0.0, chunk),
            [omega],
            method="RK45",
            rtol=RELAX_RTOL,
            atol=RELAX_ATOL,
            events=settled,
        )
        if solution.status < 0:
            raise RelaxationError(omega, solution.message)
        omega = float(solution.y[0, -1])
        if abs(drift(omega, seq, p)) <= tol:
            return omega
        polished = _newton_polish(omega, seq, p, tol)
        if polished is not None:
            return polished
        if solution.status == 1 or abs(omega - start) <= _root_xtol(omega):
            bracketed = _bracket_downstream(omega, seq, p, tol)
            if bracketed is not None:
                return bracketed
        _LOGGER.debug(
            "Still relaxing at omega=%.12g after %.3g ns", omega, done * chunk
        )

    raise RelaxationError(omega, f"drift above {tol:.3g} after {max_time:.3g} ns")


def find_all_fixed_points(
    seq: SequenceSpec,
    p: ModelParams,
    bracket: tuple[float, float] | None = None,
    n_scan: int = DEFAULT_N_SCAN,
) -> FixedPointSet:
    """Return every root of the drift inside the bracket.

    Sign changes on a dense scan are refined with Brent's method; the
    stability label follows the sign of the numeric drift slope.
    """
    low, high = default_bracket(seq, p) if bracket is None else bracket
    if not (math.isfinite(low) and math.isfinite(high) and low < high):
        raise InvalidParameterError(
            f"bracket must be finite and ordered, got {bracket!r}"
        )
    if n_scan < 3:
        raise InvalidParameterError(f"n_scan must be >= 3, got {n_scan!r}")

    grid = np.linspace(low, high, n_scan)
    values = np.asarray(drift(grid, seq, p))
    roots = [float(x) for x in grid[values == 0.0]]
    for index in np.flatnonzero(values[:-1] * values[1:] < 0):
        roots.append(
            brentq(
                lambda x: drift(x, seq, p),
                grid[index],
                grid[index + 1],
                xtol=_root_xtol(grid[index]),
                maxiter=200,
            )
        )
    if not roots:
        _LOGGER.warning(
            "No drift sign change in [%.6g, %.6g]; the bracket misses the roots",
            low,
            high,
        )

    resolution = (high - low) / (n_scan - 1)
    points: list[FixedPoint] = []
    for root in sorted(roots):
        if points and root - points[-1].omega < resolution:
            continue
        residual = abs(drift(root, seq, p))
        if residual >= ROOT_TOLERANCE:
            _LOGGER.debug("Root %.12g has residual drift %.3g", root, residual)
        slope = drift_slope(root, seq, p)
        stability = Stability.STABLE if slope < 0 else Stability.UNSTABLE
        points.append(FixedPoint(root, stability, slope))
    return FixedPointSet(tuple(points))


def _flag_jumps(omega_f: NDArray[np.float64]) -> NDArray[np.bool_]:
    jumped = np.zeros(omega_f.size, dtype=bool)
    if omega_f.size < 2:
        return jumped
    steps = np.abs(np.diff(omega_f))
    # floor for flat traces, whose median step is zero
    floor = JUMP_MIN_FRACTION * max(1.0, float(np.ptp(omega_f)))
    jumped[1:] = steps > max(JUMP_FACTOR * float(np.median(steps)), floor)
    return jumped


def sweep(
    scan_values: Sequence[float] | NDArray[np.float64],
    seq: SequenceSpec,
    p: ModelParams,
    omega_init: float = 0.0,
    tol: float | None = None,
    direction: str | None = None,
) -> SweepTrace:
    """Follow the quasi-equilibrium along ordered scan values.

    Each point is seeded with the previous result, the first with
    ``omega_init``. A point is flagged as a jump when its change in omega_f
    exceeds five times the median neighbour change. ``direction`` labels
    the trace and is inferred from the scan order when omitted.

    Raises:
        InvalidParameterError: If scan_values is empty, not monotone or runs
            against ``direction``.
        SweepError: If a point fails to relax.
    """
    values = np.asarray(scan_values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise InvalidParameterError("scan_values must be a non-empty 1-D sequence")
    steps = np.diff(values)
    if steps.size and not (np.all(steps > 0) or np.all(steps < 0)):
        raise InvalidParameterError("scan_values must be strictly monotone")
    direction = _scan_direction(steps, direction)

    omega = float(omega_init)
    omegas = np.empty(values.size)
    counts = np.empty(values.size)
    for index, value in enumerate(values):
        point = seq.with_scan(value)
        try:
            omega = relax_to_steady(omega, point, p, tol)
        except RelaxationError as err:
            raise SweepError(index, float(value)) from err
        omegas[index] = omega
        counts[index] = count_rate(point.kind, omega, point.scan, p)

    jumped = _flag_jumps(omegas)
    _LOGGER.debug(
        "Sweep of %d %s points finished with %d jumps",
        values.size,
        seq.kind,
        int(jumped.sum()),
    )
    records = tuple(
        SweepRecord(float(value), float(omega_f), float(count), bool(flag))
        for value, omega_f, count, flag in zip(
            values, omegas, counts, jumped, strict=True
        )
    )
    return SweepTrace(seq.kind, records, direction)


def loop_area(first: SweepTrace, second: SweepTrace) -> float:
    """Return the integrated |count difference| between two sweeps.

    Both traces must cover the same scan values, in any order.
    """
    order_a = np.argsort(first.scan_values)
    order_b = np.argsort(second.scan_values)
    x_a = first.scan_values[order_a]
    x_b = second.scan_values[order_b]
    if x_a.shape != x_b.shape or not np.allclose(x_a, x_b, rtol=0.0, atol=1e-12):
        raise InvalidParameterError("sweeps must cover the same scan values")
    difference = np.abs(first.counts[order_a] - second.counts[order_b])
    if difference.size < 2:
        return 0.0
    return float(trapezoid(difference, x_a))
