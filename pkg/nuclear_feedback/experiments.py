"""Named experiment runs that write figure data to CSV files."""

from __future__ import annotations

import asyncio
import json
import logging
import math
import os
from collections.abc import Awaitable, Callable, Sequence
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from . import __version__
from .const import (
    COL_ALPHA_DC,
    COL_COUNT,
    COL_DENSITY,
    COL_DRIFT,
    COL_DRIFT_SLOPE,
    COL_EXPECTED_COUNT,
    COL_KAPPA_OMEGA,
    COL_LASER_DETUNING,
    COL_MEAN_OMEGA,
    COL_OMEGA,
    COL_OMEGA_F_GHZ,
    COL_PUMP_EFFICIENCY,
    COL_SCAN_VALUE,
    COL_STABILITY,
    COL_STD_OMEGA,
    COL_TAU,
    DEFAULT_DRIFT_PROBES,
    DEFAULT_HEATMAP_CELLS,
    DEFAULT_N_CELLS,
    DEFAULT_OUTPUT_DIR,
    DIRECTION_BOTH,
    DIRECTION_DOWN,
    DIRECTION_UP,
    DIRECTIONS,
    ENV_SIM_THREADS,
    EXPERIMENT_ATLAS,
    EXPERIMENT_ECHO,
    EXPERIMENT_FID,
    EXPERIMENT_NAMES,
    EXPERIMENT_ONE_PULSE,
    FILE_COUNT_MAP,
    FILE_DIRECTION,
    FILE_DRIFT_LANDSCAPE,
    FILE_FIXED_POINTS,
    FILE_HEATMAP,
    FILE_META,
    FILE_PLOT,
    FILE_TRACE,
    TWO_PI,
    UNIT_CONVENTIONS,
)
from .exceptions import InvalidParameterError
from .fokker_planck import (
    OmegaGrid,
    expected_count,
    moments,
    steady_state_closed_form,
)
from .mean_field import (
    FixedPointSet,
    SweepTrace,
    default_bracket,
    drift,
    find_all_fixed_points,
    loop_area,
    sweep,
)
from .model import (
    ModelParams,
    SequenceKind,
    SequenceSpec,
    count_function,
    count_rate_c2,
    count_rate_derivative,
)

_LOGGER = logging.getLogger(__name__)

COUNT_MAP_POINTS = 401
LANDSCAPE_POINTS = 801

_REQUIRED_KIND: dict[str, SequenceKind] = {
    EXPERIMENT_ONE_PULSE: SequenceKind.ONE_PULSE,
    EXPERIMENT_FID: SequenceKind.TWO_PULSE,
    EXPERIMENT_ECHO: SequenceKind.THREE_PULSE,
}


@dataclass(frozen=True)
class ScanRange:
    """Inclusive scan from start to stop in steps of ``step``."""

    start: float
    stop: float
    step: float

    def __post_init__(self) -> None:
        """Validate the range."""
        for name in ("start", "stop", "step"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"scan {name} must be finite")
        if not self.step > 0:
            raise InvalidParameterError(f"scan step must be > 0, got {self.step!r}")
        if self.stop < self.start:
            raise InvalidParameterError(
                f"scan stop {self.stop!r} is below start {self.start!r}"
            )

    def values(self) -> NDArray[np.float64]:
        """Return the increasing scan values."""
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        return self.start + self.step * np.arange(count + 1)


@dataclass(frozen=True)
class GridOverrides:
    """Optional overrides of the default Overhauser-shift grid."""

    omega_max: float | None = None
    n_cells: int = DEFAULT_N_CELLS

    def grid_for(
        self, p: ModelParams, tau_min: float = 0.0, laser_detuning: float = 0.0
    ) -> OmegaGrid:
        """Return the grid for a parameter set."""
        if self.omega_max is not None:
            return OmegaGrid.symmetric(self.omega_max, self.n_cells)
        return OmegaGrid.default_for(p, tau_min, laser_detuning, self.n_cells)


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration of one experiment run."""

    name: str
    params: ModelParams
    sequence: SequenceSpec
    scan: ScanRange
    direction: str = DIRECTION_BOTH
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    grid: GridOverrides = field(default_factory=GridOverrides)
    omega_init: float = 0.0
    drift_probes: tuple[float, ...] = ()
    heatmap_cells: int = DEFAULT_HEATMAP_CELLS
    plot: bool = False

    def __post_init__(self) -> None:
        """Check that the pieces fit together."""
        if self.name not in EXPERIMENT_NAMES:
            raise InvalidParameterError(
                f"name must be one of {EXPERIMENT_NAMES}, got {self.name!r}"
            )
        required = _REQUIRED_KIND.get(self.name)
        if required is not None and self.sequence.kind is not required:
            raise InvalidParameterError(
                f"{self.name} needs a {required} sequence, got {self.sequence.kind}"
            )
        if self.direction not in DIRECTIONS:
            raise InvalidParameterError(
                f"direction must be one of {DIRECTIONS}, got {self.direction!r}"
            )
        if self.heatmap_cells < 1:
            raise InvalidParameterError("heatmap_cells must be >= 1")
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    def directions(self) -> list[str]:
        """Return the sweep directions in run order.

        Detuning scans run down then up and delay scans up then down.
        """
        if self.direction != DIRECTION_BOTH:
            return [self.direction]
        if self.sequence.kind is SequenceKind.ONE_PULSE:
            return [DIRECTION_DOWN, DIRECTION_UP]
        return [DIRECTION_UP, DIRECTION_DOWN]

    def as_dict(self) -> dict[str, Any]:
        """Return a JSON-ready description in internal units."""
        return {
            "name": self.name,
            "model": asdict(self.params),
            "sequence": {
                "kind": str(self.sequence.kind),
                "echo_half_period": self.sequence.echo_half_period,
                "repetition_period": self.sequence.repetition_period,
            },
            "scan": asdict(self.scan) | {"direction": self.direction},
            "grid": asdict(self.grid),
            "omega_init": self.omega_init,
            "drift_probes": list(self.drift_probes),
            "output": {
                "directory": str(self.output_dir),
                "heatmap_cells": self.heatmap_cells,
                "plot": self.plot,
            },
        }


@dataclass(frozen=True)
class EchoResult:
    """Steady states of the echo sequence along tau."""

    taus: NDArray[np.float64]
    grid: OmegaGrid
    means: NDArray[np.float64]
    variances: NDArray[np.float64]
    counts: NDArray[np.float64]
    densities: NDArray[np.float64]

    def trace_frame(self) -> pd.DataFrame:
        """Return <Omega>, its spread and <C_3> versus tau."""
        return pd.DataFrame(
            {
                COL_TAU: self.taus,
                COL_MEAN_OMEGA: self.means,
                COL_STD_OMEGA: np.sqrt(self.variances),
                COL_EXPECTED_COUNT: self.counts,
            }
        )

    def heatmap_frame(self, max_cells: int = DEFAULT_HEATMAP_CELLS) -> pd.DataFrame:
        """Return f(Omega; tau) in long form, keeping at most max_cells per tau."""
        stride = max(1, math.ceil(self.grid.n_cells / max_cells))
        omega = self.grid.centers[::stride]
        density = self.densities[:, ::stride]
        return pd.DataFrame(
            {
                COL_TAU: np.repeat(self.taus, omega.size),
                COL_OMEGA: np.tile(omega, self.taus.size),
                COL_DENSITY: density.ravel(),
            }
        )


def _echo_column(
    tau: float, seq: SequenceSpec, p: ModelParams, grid: OmegaGrid
) -> tuple[float, float, float, NDArray[np.float64]]:
    countfn = count_function(seq.with_scan(tau), p)
    pdf = steady_state_closed_form(countfn, p, grid)
    mean, variance = moments(pdf)
    return mean, variance, expected_count(pdf, countfn), pdf.density


def _echo_result(
    taus: NDArray[np.float64],
    grid: OmegaGrid,
    columns: Sequence[tuple[float, float, float, NDArray[np.float64]]],
) -> EchoResult:
    means, variances, counts, densities = zip(*columns, strict=True)
    return EchoResult(
        taus=np.asarray(taus, dtype=float),
        grid=grid,
        means=np.array(means),
        variances=np.array(variances),
        counts=np.array(counts),
        densities=np.vstack(densities),
    )


def echo_steady_states(
    seq: SequenceSpec, p: ModelParams, taus: Sequence[float], grid: OmegaGrid
) -> EchoResult:
    """Return the closed-form steady state for every tau, in order."""
    taus = np.asarray(taus, dtype=float)
    columns = [_echo_column(float(tau), seq, p, grid) for tau in taus]
    return _echo_result(taus, grid, columns)


def fixed_point_atlas(
    seq: SequenceSpec, p: ModelParams, scan_values: Sequence[float]
) -> list[tuple[float, FixedPointSet]]:
    """Return every fixed point at each scan value."""
    return [
        (float(value), find_all_fixed_points(seq.with_scan(value), p))
        for value in scan_values
    ]


def bistable_window_width(
    atlas: Sequence[tuple[float, FixedPointSet]], step: float
) -> float:
    """Return the scan width over which two or more stable branches coexist."""
    return step * sum(1 for _, points in atlas if len(points.stable) >= 2)


def atlas_frame(atlas: Sequence[tuple[float, FixedPointSet]]) -> pd.DataFrame:
    """Return the atlas as one row per fixed point."""
    rows = [
        {
            COL_SCAN_VALUE: value,
            COL_OMEGA: point.omega,
            COL_STABILITY: str(point.stability),
            COL_DRIFT_SLOPE: point.drift_slope,
        }
        for value, points in atlas
        for point in points
    ]
    return pd.DataFrame(
        rows, columns=[COL_SCAN_VALUE, COL_OMEGA, COL_STABILITY, COL_DRIFT_SLOPE]
    )


def drift_landscape(
    seq: SequenceSpec, p: ModelParams, detunings: Sequence[float]
) -> pd.DataFrame:
    """Return kappa*omega and alpha*dC/domega against omega at fixed scan values."""
    half_width = max(default_bracket(seq.with_scan(value), p)[1] for value in detunings)
    omega = np.linspace(-half_width, half_width, LANDSCAPE_POINTS)
    frames = []
    for value in detunings:
        point = seq.with_scan(value)
        feedback = p.alpha * np.asarray(
            count_rate_derivative(point.kind, omega, point.scan, p)
        )
        frames.append(
            pd.DataFrame(
                {
                    COL_LASER_DETUNING: value,
                    COL_OMEGA: omega,
                    COL_KAPPA_OMEGA: p.kappa * omega,
                    COL_ALPHA_DC: feedback,
                    COL_DRIFT: drift(omega, point, p),
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def fid_direction_frame(trace: SweepTrace, p: ModelParams) -> pd.DataFrame:
    """Return the count, Overhauser and pumping-efficiency panels of a delay sweep."""
    frame = trace.to_frame()
    frame[COL_OMEGA_F_GHZ] = trace.omega_f / TWO_PI
    frame[COL_PUMP_EFFICIENCY] = np.exp(-(trace.omega_f**2) / (2.0 * p.sigma**2))
    return frame


def fid_count_map(
    p: ModelParams, taus: NDArray[np.float64], half_width: float
) -> pd.DataFrame:
    """Return C_2(omega, tau) on a regular grid."""
    omega = np.linspace(-half_width, half_width, COUNT_MAP_POINTS)
    counts = np.vstack([np.asarray(count_rate_c2(omega, tau, p)) for tau in taus])
    return pd.DataFrame(
        {
            COL_TAU: np.repeat(taus, omega.size),
            COL_OMEGA: np.tile(omega, taus.size),
            COL_COUNT: counts.ravel(),
        }
    )


def _worker_count() -> int:
    raw = os.environ.get(ENV_SIM_THREADS)
    default = os.cpu_count() or 1
    if raw is None:
        return default
    try:
        workers = int(raw)
    except ValueError:
        workers = 0
    if workers < 1:
        _LOGGER.warning(
            "Ignoring %s=%r, expected a positive integer", ENV_SIM_THREADS, raw
        )
        return default
    return workers


class _RunOutputs:
    """Collect the files written by one run."""

    def __init__(self, cfg: ExperimentConfig) -> None:
        self._cfg = cfg
        self.files: list[Path] = []
        cfg.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, template: str, **kwargs: str) -> Path:
        path = self._cfg.output_dir / template.format(name=self._cfg.name, **kwargs)
        self.files.append(path)
        return path

    def write_csv(self, frame: pd.DataFrame, template: str, **kwargs: str) -> Path:
        path = self.path(template, **kwargs)
        frame.to_csv(path, index=False, float_format="%.12g")
        _LOGGER.info("Wrote %s (%d rows)", path, len(frame))
        return path

    def write_meta(self, summary: dict[str, Any]) -> list[Path]:
        path = self._cfg.output_dir / FILE_META.format(name=self._cfg.name)
        meta = {
            "experiment": self._cfg.name,
            "version": __version__,
            "config": self._cfg.as_dict(),
            "units": UNIT_CONVENTIONS,
            "files": [item.name for item in self.files],
            "summary": summary,
        }
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        self.files.append(path)
        _LOGGER.info("Wrote %s", path)
        return self.files


async def _async_run_sweeps(
    cfg: ExperimentConfig, executor: Executor | None
) -> list[SweepTrace]:
    loop = asyncio.get_running_loop()
    values = cfg.scan.values()
    traces: list[SweepTrace] = []
    omega = cfg.omega_init
    for direction in cfg.directions():
        ordered = values if direction == DIRECTION_UP else values[::-1]
        _LOGGER.info(
            "Sweeping %s %s over %d points", cfg.name, direction, ordered.size
        )
        trace = await loop.run_in_executor(
            executor,
            partial(
                sweep, ordered, cfg.sequence, cfg.params, omega, direction=direction
            ),
        )
        omega = float(trace.omega_f[-1])
        traces.append(trace)
    return traces


def _loop_summary(traces: Sequence[SweepTrace]) -> dict[str, Any]:
    summary: dict[str, Any] = {
        trace.direction: {"jumps": int(trace.jumped.sum())} for trace in traces
    }
    if len(traces) == 2:
        summary["loop_area"] = loop_area(traces[0], traces[1])
    return summary


async def async_run_one_pulse_hysteresis(
    cfg: ExperimentConfig, executor: Executor | None = None
) -> list[Path]:
    """Run the detuning scan in each direction and the drift landscape.

    Returns:
        Paths of the files written, meta file last.
    """
    outputs = _RunOutputs(cfg)
    traces = await _async_run_sweeps(cfg, executor)
    for trace in traces:
        outputs.write_csv(trace.to_frame(), FILE_DIRECTION, direction=trace.direction)

    values = cfg.scan.values()
    probes = cfg.drift_probes or tuple(
        np.linspace(values[0], values[-1], DEFAULT_DRIFT_PROBES)
    )
    loop = asyncio.get_running_loop()
    landscape = await loop.run_in_executor(
        executor, partial(drift_landscape, cfg.sequence, cfg.params, probes)
    )
    outputs.write_csv(landscape, FILE_DRIFT_LANDSCAPE)

    if cfg.plot:
        from .plotting import plot_sweeps

        plot_sweeps(traces, outputs.path(FILE_PLOT), "laser detuning (rad/ns)")
    return outputs.write_meta(_loop_summary(traces))


async def async_run_two_pulse_fid(
    cfg: ExperimentConfig, executor: Executor | None = None
) -> list[Path]:
    """Run the Ramsey delay scan in each direction.

    Each direction yields the count, Overhauser and pumping-efficiency
    panels. The count map and the stable fixed points per delay are written
    alongside.
    """
    outputs = _RunOutputs(cfg)
    traces = await _async_run_sweeps(cfg, executor)
    for trace in traces:
        outputs.write_csv(
            fid_direction_frame(trace, cfg.params),
            FILE_DIRECTION,
            direction=trace.direction,
        )

    loop = asyncio.get_running_loop()
    taus = cfg.scan.values()
    half_width = cfg.grid.omega_max or default_bracket(
        cfg.sequence.with_scan(taus[-1]), cfg.params
    )[1]
    count_map = await loop.run_in_executor(
        executor, partial(fid_count_map, cfg.params, taus, half_width)
    )
    outputs.write_csv(count_map, FILE_COUNT_MAP)

    atlas = await loop.run_in_executor(
        executor, partial(fixed_point_atlas, cfg.sequence, cfg.params, taus)
    )
    stable = atlas_frame(atlas)
    outputs.write_csv(
        stable[stable[COL_STABILITY] == "stable"].reset_index(drop=True),
        FILE_FIXED_POINTS,
    )

    if cfg.plot:
        from .plotting import plot_sweeps

        plot_sweeps(traces, outputs.path(FILE_PLOT), "tau (ns)")
    return outputs.write_meta(_loop_summary(traces))


async def async_run_three_pulse_echo(
    cfg: ExperimentConfig, executor: Executor | None = None
) -> list[Path]:
    """Compute the echo steady states for every tau in parallel.

    Writes the pdf heatmap and the <Omega>, <C_3> trace. Columns are
    collected in tau order whatever the completion order.
    """
    outputs = _RunOutputs(cfg)
    taus = cfg.scan.values()
    grid = cfg.grid.grid_for(cfg.params, tau_min=cfg.scan.start)
    loop = asyncio.get_running_loop()
    completed = 0
    milestone = 0

    async def column(tau: float) -> tuple[float, float, float, NDArray[np.float64]]:
        nonlocal completed, milestone
        result = await loop.run_in_executor(
            pool, partial(_echo_column, tau, cfg.sequence, cfg.params, grid)
        )
        completed += 1
        progress = 100 * completed // taus.size
        if progress >= milestone + 25:
            milestone = progress - progress % 25
            _LOGGER.info("Echo steady states %d%% complete", milestone)
        return result

    workers = _worker_count()
    _LOGGER.info(
        "Solving %d echo steady states on %d cells with %d workers",
        taus.size,
        grid.n_cells,
        workers,
    )
    pool = executor or ThreadPoolExecutor(max_workers=workers)
    try:
        columns = await asyncio.gather(*(column(float(tau)) for tau in taus))
    finally:
        if executor is None:
            pool.shutdown(wait=True)

    result = _echo_result(taus, grid, columns)
    outputs.write_csv(result.heatmap_frame(cfg.heatmap_cells), FILE_HEATMAP)
    outputs.write_csv(result.trace_frame(), FILE_TRACE)

    if cfg.plot:
        from .plotting import plot_echo

        plot_echo(result, outputs.path(FILE_PLOT))
    summary = {
        "count_min": float(result.counts.min()),
        "count_max": float(result.counts.max()),
        "grid_cells": grid.n_cells,
        "grid_omega_max": grid.omega_max,
    }
    return outputs.write_meta(summary)


async def async_run_fixed_point_atlas(
    cfg: ExperimentConfig, executor: Executor | None = None
) -> list[Path]:
    """Write every fixed point with its stability at each scan value."""
    outputs = _RunOutputs(cfg)
    values = cfg.scan.values()
    loop = asyncio.get_running_loop()
    atlas = await loop.run_in_executor(
        executor, partial(fixed_point_atlas, cfg.sequence, cfg.params, values)
    )
    outputs.write_csv(atlas_frame(atlas), FILE_FIXED_POINTS)

    if cfg.plot:
        from .plotting import plot_atlas

        plot_atlas(atlas, outputs.path(FILE_PLOT))
    summary = {
        "bistable_window_width": bistable_window_width(atlas, cfg.scan.step),
        "max_stable_branches": max(len(points.stable) for _, points in atlas),
    }
    return outputs.write_meta(summary)


_Runner = Callable[[ExperimentConfig, Executor | None], Awaitable[list[Path]]]

_RUNNERS: dict[str, _Runner] = {
    EXPERIMENT_ONE_PULSE: async_run_one_pulse_hysteresis,
    EXPERIMENT_FID: async_run_two_pulse_fid,
    EXPERIMENT_ECHO: async_run_three_pulse_echo,
    EXPERIMENT_ATLAS: async_run_fixed_point_atlas,
}


async def async_run_experiment(
    cfg: ExperimentConfig, executor: Executor | None = None
) -> list[Path]:
    """Run the experiment named in the config."""
    _LOGGER.info("Starting %s", cfg.name)
    files = await _RUNNERS[cfg.name](cfg, executor)
    _LOGGER.info("Finished %s, %d files in %s", cfg.name, len(files), cfg.output_dir)
    return files


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Run an experiment from synchronous code."""
    return asyncio.run(async_run_experiment(cfg))


def run_one_pulse_hysteresis(cfg: ExperimentConfig) -> list[Path]:
    """Run the one-pulse detuning scans from synchronous code."""
    return asyncio.run(async_run_one_pulse_hysteresis(cfg))


def run_two_pulse_fid(cfg: ExperimentConfig) -> list[Path]:
    """Run the Ramsey delay scans from synchronous code."""
    return asyncio.run(async_run_two_pulse_fid(cfg))


def run_three_pulse_echo(cfg: ExperimentConfig) -> list[Path]:
    """Run the echo steady states from synchronous code."""
    return asyncio.run(async_run_three_pulse_echo(cfg))


def run_fixed_point_atlas(cfg: ExperimentConfig) -> list[Path]:
    """Run the fixed-point atlas from synchronous code."""
    return asyncio.run(async_run_fixed_point_atlas(cfg))
