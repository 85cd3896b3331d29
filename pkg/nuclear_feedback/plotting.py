"""Optional PNG figures drawn from experiment results."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .const import TWO_PI  # noqa: E402
from .mean_field import FixedPointSet, Stability, SweepTrace  # noqa: E402

if TYPE_CHECKING:
    from .experiments import EchoResult

_LOGGER = logging.getLogger(__name__)


def plot_sweeps(traces: Sequence[SweepTrace], path: Path, xlabel: str) -> Path:
    """Plot count and Overhauser shift of each sweep direction."""
    fig, (ax_count, ax_omega) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    for trace in traces:
        ax_count.plot(trace.scan_values, trace.counts, label=trace.direction)
        ax_omega.plot(trace.scan_values, trace.omega_f / TWO_PI, label=trace.direction)
        jumps = trace.jumped
        ax_omega.plot(
            trace.scan_values[jumps], trace.omega_f[jumps] / TWO_PI, "kx", ms=4
        )
    ax_count.set_ylabel("count (trions/cycle)")
    ax_omega.set_ylabel("omega_f / 2pi (GHz)")
    ax_omega.set_xlabel(xlabel)
    ax_count.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    _LOGGER.info("Wrote %s", path)
    return path


def plot_echo(result: EchoResult, path: Path) -> Path:
    """Plot the steady-state heatmap with the mean overlay and <C_3>."""
    fig, (ax_map, ax_count) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    ax_map.pcolormesh(
        result.taus,
        result.grid.centers,
        result.densities.T,
        shading="nearest",
        cmap="viridis",
    )
    ax_map.plot(result.taus, result.means, "w-", lw=1)
    ax_map.set_ylabel("Omega (rad/ns)")
    ax_count.plot(result.taus, result.counts)
    ax_count.set_ylabel("<C3> (trions/cycle)")
    ax_count.set_xlabel("tau (ns)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    _LOGGER.info("Wrote %s", path)
    return path


def plot_atlas(atlas: Sequence[tuple[float, FixedPointSet]], path: Path) -> Path:
    """Plot fixed points against the scan value, stable filled."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for stability, marker in ((Stability.STABLE, "k."), (Stability.UNSTABLE, "r.")):
        found = [
            (value, pt.omega)
            for value, points in atlas
            for pt in points
            if pt.stability is stability
        ]
        xs = [value for value, _ in found]
        ys = [omega for _, omega in found]
        ax.plot(xs, ys, marker, ms=2, label=str(stability))
    ax.set_xlabel("scan value")
    ax.set_ylabel("omega (rad/ns)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    _LOGGER.info("Wrote %s", path)
    return path
