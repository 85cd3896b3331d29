"""Constants for the nuclear feedback simulation toolkit."""

from __future__ import annotations

import math
from typing import Final

DOMAIN: Final = "nuclear_feedback"

TWO_PI: Final = 2.0 * math.pi

# Internal units: time in ns, angular frequency in rad/ns.
# Frequencies entered in GHz are ordinary frequencies and are multiplied by 2*pi.
UNIT_TIME: Final = "ns"
UNIT_ANGULAR_FREQUENCY: Final = "rad/ns"
UNIT_RATE: Final = "/ns"
UNIT_INVERSE_TIME_SQUARED: Final = "ns^-2"
UNIT_DIFFUSION: Final = "rad^2/ns^3"

# Physical defaults taken from the experiment description
DEFAULT_DELTA_E: Final = TWO_PI * 25.3  # electron Larmor frequency, 25.3 GHz
DEFAULT_T_PUMP: Final = 26.0  # optical pumping window, ns
REPETITION_PERIOD: Final = 13.0  # mode-locked laser period, ns
DEFAULT_SIGMA: Final = TWO_PI * 1.6  # pumping linewidth, 1.6 GHz
DEFAULT_BETA0: Final = 3.0 / DEFAULT_T_PUMP  # peak pumping rate, 1/ns
DEFAULT_S_PUMP: Final = 0.5  # full pumping toward spin up
DEFAULT_PHI0: Final = 0.0
DEFAULT_KAPPA: Final = 1.0  # 1/ns; stationary results only depend on ratios to kappa
MAX_POLARIZATION: Final = 0.5

# Pulse physics quadrature
PULSE_QUADRATURE_POINTS: Final = 2001  # composite Simpson, odd point count
GAUSSIAN_SUPPORT_WIDTHS: Final = 5.0  # integrate over +/- 5 durations

# Fokker-Planck discretisation
DEFAULT_N_CELLS: Final = 2048
MIN_N_CELLS: Final = 64
GRID_SIGMA_WIDTHS: Final = 6.0
GRID_DIFFUSION_WIDTHS: Final = 8.0
GRID_FRINGE_PERIODS: Final = 3.0
GRID_MAX_SIGMA_WIDTHS: Final = 12.0
CFL_DIFFUSION: Final = 0.4
CFL_DRIFT: Final = 0.4
POSITIVITY_SAFETY: Final = 0.9
NEGATIVE_DENSITY_TOLERANCE: Final = 1e-12
MASS_TOLERANCE: Final = 1e-9
BERNOULLI_TAYLOR_LIMIT: Final = 1e-6
EVOLVE_METHOD_EXPLICIT: Final = "explicit"
EVOLVE_METHOD_IMPLICIT: Final = "implicit"
EVOLVE_METHODS: Final = (EVOLVE_METHOD_EXPLICIT, EVOLVE_METHOD_IMPLICIT)

# Mean-field relaxation and root finding
RELAX_TOLERANCE: Final = 1e-8  # rad/ns per ns at kappa = 1/ns, scaled with kappa
RELAX_MAX_TIME: Final = 1e4  # in units of 1/kappa
# integration chunk between Newton attempts, units of 1/kappa
RELAX_CHUNK_TIME: Final = 5.0
RELAX_RTOL: Final = 1e-8
# the settle event fires at this fraction of the drift tolerance
RELAX_EVENT_FRACTION: Final = 0.5
RELAX_ATOL: Final = 1e-10
BASIN_CHECK_POINTS: Final = 64
ROOT_TOLERANCE: Final = 1e-10
# root step tolerance, relative to max(1, |omega|)
ROOT_XTOL: Final = 1e-12
DEFAULT_N_SCAN: Final = 4001
BRACKET_SIGMA_WIDTHS: Final = 10.0
BRACKET_PROBE_POINTS: Final = 20001
BRACKET_MARGIN: Final = 1.1
SLOPE_STEP: Final = 1e-6
JUMP_FACTOR: Final = 5.0
# smallest flagged step in omega_f, relative to max(1 rad/ns, its span)
JUMP_MIN_FRACTION: Final = 1e-6

# Scan directions
DIRECTION_UP: Final = "up"
DIRECTION_DOWN: Final = "down"
DIRECTION_BOTH: Final = "both"
DIRECTIONS: Final = (DIRECTION_UP, DIRECTION_DOWN, DIRECTION_BOTH)

# Experiments
EXPERIMENT_ONE_PULSE: Final = "one_pulse_hysteresis"
EXPERIMENT_FID: Final = "two_pulse_fid"
EXPERIMENT_ECHO: Final = "three_pulse_echo"
EXPERIMENT_ATLAS: Final = "fixed_point_atlas"
EXPERIMENT_NAMES: Final = (
    EXPERIMENT_ONE_PULSE,
    EXPERIMENT_FID,
    EXPERIMENT_ECHO,
    EXPERIMENT_ATLAS,
)
DEFAULT_DRIFT_PROBES: Final = 5
DEFAULT_HEATMAP_CELLS: Final = 256
DEFAULT_OUTPUT_DIR: Final = "results"

# Output files
FILE_DIRECTION: Final = "{name}_{direction}.csv"
FILE_HEATMAP: Final = "{name}_pdf_heatmap.csv"
FILE_META: Final = "{name}_meta.json"
FILE_TRACE: Final = "{name}_trace.csv"
FILE_DRIFT_LANDSCAPE: Final = "{name}_drift_landscape.csv"
FILE_COUNT_MAP: Final = "{name}_count_map.csv"
FILE_FIXED_POINTS: Final = "{name}_fixed_points.csv"
FILE_PLOT: Final = "{name}.png"

# CSV columns
COL_SCAN_VALUE: Final = "scan_value"
COL_OMEGA_F: Final = "omega_f_rad_per_ns"
COL_COUNT: Final = "count"
COL_JUMPED: Final = "jumped"
COL_OMEGA_F_GHZ: Final = "omega_f_ghz"
COL_PUMP_EFFICIENCY: Final = "pumping_efficiency"
COL_TAU: Final = "tau_ns"
COL_OMEGA: Final = "omega_rad_per_ns"
COL_DENSITY: Final = "density"
COL_MEAN_OMEGA: Final = "mean_omega_rad_per_ns"
COL_STD_OMEGA: Final = "std_omega_rad_per_ns"
COL_EXPECTED_COUNT: Final = "expected_count"
COL_LASER_DETUNING: Final = "laser_detuning_rad_per_ns"
COL_KAPPA_OMEGA: Final = "kappa_omega"
COL_ALPHA_DC: Final = "alpha_dc_domega"
COL_DRIFT: Final = "drift"
COL_STABILITY: Final = "stability"
COL_DRIFT_SLOPE: Final = "drift_slope"

SWEEP_COLUMNS: Final = (COL_SCAN_VALUE, COL_OMEGA_F, COL_COUNT, COL_JUMPED)

# CLI
SUBCOMMAND_ONE_PULSE: Final = "one-pulse"
SUBCOMMAND_FID: Final = "fid"
SUBCOMMAND_ECHO: Final = "echo"
SUBCOMMAND_ATLAS: Final = "atlas"
SUBCOMMAND_VALIDATE: Final = "validate"
SUBCOMMAND_EXPERIMENTS: Final = {
    SUBCOMMAND_ONE_PULSE: EXPERIMENT_ONE_PULSE,
    SUBCOMMAND_FID: EXPERIMENT_FID,
    SUBCOMMAND_ECHO: EXPERIMENT_ECHO,
    SUBCOMMAND_ATLAS: EXPERIMENT_ATLAS,
}
BUNDLED_CONFIGS: Final = {
    EXPERIMENT_ONE_PULSE: "fig6_one_pulse.toml",
    EXPERIMENT_FID: "fig4_fid.toml",
    EXPERIMENT_ECHO: "fig5c.toml",
    EXPERIMENT_ATLAS: "fig6_atlas.toml",
}
ENV_SIM_THREADS: Final = "SIM_THREADS"

EXIT_OK: Final = 0
EXIT_RUNTIME_ERROR: Final = 1
EXIT_USAGE_ERROR: Final = 2

UNIT_CONVENTIONS: Final = {
    "time": UNIT_TIME,
    "angular_frequency": UNIT_ANGULAR_FREQUENCY,
    "rate": UNIT_RATE,
    "diffusion": UNIT_DIFFUSION,
    "count": "trions/cycle",
    "ghz_conversion": "omega_rad_per_ns = 2*pi * f_GHz",
}
