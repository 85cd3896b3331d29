"""TOML experiment configuration with explicit physical units."""

from __future__ import annotations

import json
import logging
import re
import tomllib
from collections.abc import Callable
from importlib.resources import files
from pathlib import Path
from typing import Any, Final

import voluptuous as vol

from .const import (
    BUNDLED_CONFIGS,
    DEFAULT_DELTA_E,
    DEFAULT_HEATMAP_CELLS,
    DEFAULT_KAPPA,
    DEFAULT_N_CELLS,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_PHI0,
    DEFAULT_S_PUMP,
    DEFAULT_SIGMA,
    DEFAULT_T_PUMP,
    DIRECTION_BOTH,
    DIRECTIONS,
    EXPERIMENT_ECHO,
    EXPERIMENT_FID,
    EXPERIMENT_NAMES,
    EXPERIMENT_ONE_PULSE,
    MAX_POLARIZATION,
    MIN_N_CELLS,
    REPETITION_PERIOD,
    TWO_PI,
    UNIT_ANGULAR_FREQUENCY,
    UNIT_DIFFUSION,
    UNIT_RATE,
    UNIT_TIME,
)
from .exceptions import ConfigError, InvalidParameterError
from .experiments import ExperimentConfig, GridOverrides, ScanRange
from .model import ModelParams, SequenceKind, SequenceSpec

_LOGGER = logging.getLogger(__name__)

# Sections
SECTION_EXPERIMENT: Final = "experiment"
SECTION_MODEL: Final = "model"
SECTION_SEQUENCE: Final = "sequence"
SECTION_SCAN: Final = "scan"
SECTION_GRID: Final = "grid"
SECTION_OUTPUT: Final = "output"

# Keys
CONF_NAME: Final = "name"
CONF_DELTA_E: Final = "delta_e"
CONF_KAPPA: Final = "kappa"
CONF_DIFFUSION: Final = "diffusion"
CONF_DIFFUSION_OVER_KAPPA: Final = "diffusion_over_kappa"
CONF_ALPHA: Final = "alpha"
CONF_ALPHA_OVER_KAPPA: Final = "alpha_over_kappa"
CONF_KAPPA_OVER_ALPHA: Final = "kappa_over_alpha"
CONF_BETA0: Final = "beta0"
CONF_BETA0_T_PUMP: Final = "beta0_t_pump"
CONF_SIGMA: Final = "sigma"
CONF_S_PUMP: Final = "s_pump"
CONF_T_PUMP: Final = "t_pump"
CONF_PHI0: Final = "phi0"
CONF_KIND: Final = "kind"
CONF_ECHO_HALF_PERIOD: Final = "echo_half_period"
CONF_REPETITION_PERIOD: Final = "repetition_period"
CONF_START: Final = "start"
CONF_STOP: Final = "stop"
CONF_STEP: Final = "step"
CONF_DIRECTION: Final = "direction"
CONF_OMEGA_INIT: Final = "omega_init"
CONF_DRIFT_PROBES: Final = "drift_probes"
CONF_OMEGA_MAX: Final = "omega_max"
CONF_N_CELLS: Final = "n_cells"
CONF_DIRECTORY: Final = "directory"
CONF_PLOT: Final = "plot"
CONF_HEATMAP_CELLS: Final = "heatmap_cells"

DEFAULT_BETA0_T_PUMP: Final = 3.0

# Dimensions and unit factors to internal units
ANGULAR_FREQUENCY: Final = "angular frequency"
TIME: Final = "time"
RATE: Final = "rate"
INVERSE_TIME_SQUARED: Final = "inverse time squared"
TIME_SQUARED: Final = "time squared"
DIFFUSION: Final = "diffusion"
MAGNETIC_FIELD: Final = "magnetic field"

UNITS: Final[dict[str, dict[str, float]]] = {
    ANGULAR_FREQUENCY: {
        "rad/ns": 1.0,
        "rad/ps": 1e3,
        "GHz": TWO_PI,
        "MHz": TWO_PI * 1e-3,
    },
    TIME: {"ns": 1.0, "ps": 1e-3, "us": 1e3, "ms": 1e6, "s": 1e9},
    RATE: {"/ns": 1.0, "1/ns": 1.0, "/us": 1e-3, "/ms": 1e-6, "/s": 1e-9},
    INVERSE_TIME_SQUARED: {"ns^-2": 1.0, "ps^-2": 1e6, "us^-2": 1e-6},
    TIME_SQUARED: {"ns^2": 1.0, "ps^2": 1e-6, "us^2": 1e6},
    DIFFUSION: {"rad^2/ns^3": 1.0},
    MAGNETIC_FIELD: {"T": 1.0, "mT": 1e-3, "G": 1e-4},
}

_QUANTITY = re.compile(
    r"^\s*(?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(?P<unit>\S+)\s*$"
)

_KIND_FOR_EXPERIMENT: Final = {
    EXPERIMENT_ONE_PULSE: SequenceKind.ONE_PULSE,
    EXPERIMENT_FID: SequenceKind.TWO_PULSE,
    EXPERIMENT_ECHO: SequenceKind.THREE_PULSE,
}


def parse_quantity(value: Any, dimension: str) -> float:
    """Convert a value such as ``"25.3 GHz"`` to internal units.

    Bare numbers are only accepted for zero, which needs no unit.

    Raises:
        ValueError: If the unit is missing, unknown or of another dimension.
    """
    units = UNITS[dimension]
    if isinstance(value, bool):
        raise ValueError(f"expected a {dimension} with a unit, got {value!r}")
    if isinstance(value, int | float):
        if value == 0:
            return 0.0
        raise ValueError(
            f"missing unit for {value!r}, expected one of {', '.join(units)}"
        )
    if not isinstance(value, str):
        raise ValueError(f"expected a {dimension} with a unit, got {value!r}")

    match = _QUANTITY.match(value)
    if match is None:
        raise ValueError(f"cannot parse {value!r} as a number with a unit")
    unit = match["unit"]
    if unit not in units:
        for other, table in UNITS.items():
            if unit in table:
                raise ValueError(f"unit {unit!r} is a {other}, expected a {dimension}")
        raise ValueError(f"unknown unit {unit!r}, expected one of {', '.join(units)}")
    return float(match["number"]) * units[unit]


def quantity(dimension: str) -> Callable[[Any], float]:
    """Return a voluptuous validator for a dimensioned value."""

    def validate(value: Any) -> float:
        try:
            return parse_quantity(value, dimension)
        except ValueError as err:
            raise vol.Invalid(str(err)) from err

    return validate


def _raw_scan_value(value: Any) -> Any:
    if isinstance(value, str | int | float) and not isinstance(value, bool):
        return value
    raise vol.Invalid(f"expected a number with a unit, got {value!r}")


_number = vol.All(vol.Coerce(float), vol.Range(min=0.0))

EXPERIMENT_SCHEMA: Final = vol.Schema(
    {vol.Required(CONF_NAME): vol.In(EXPERIMENT_NAMES)}, extra=vol.PREVENT_EXTRA
)

MODEL_SCHEMA: Final = vol.Schema(
    {
        vol.Optional(CONF_DELTA_E): quantity(ANGULAR_FREQUENCY),
        vol.Optional(CONF_KAPPA): quantity(RATE),
        vol.Exclusive(CONF_DIFFUSION, "diffusion"): quantity(DIFFUSION),
        vol.Exclusive(CONF_DIFFUSION_OVER_KAPPA, "diffusion"): quantity(
            INVERSE_TIME_SQUARED
        ),
        vol.Exclusive(CONF_ALPHA, "alpha"): quantity(DIFFUSION),
        vol.Exclusive(CONF_ALPHA_OVER_KAPPA, "alpha"): quantity(INVERSE_TIME_SQUARED),
        vol.Exclusive(CONF_KAPPA_OVER_ALPHA, "alpha"): quantity(TIME_SQUARED),
        vol.Exclusive(CONF_BETA0, "beta0"): quantity(RATE),
        vol.Exclusive(CONF_BETA0_T_PUMP, "beta0"): _number,
        vol.Optional(CONF_SIGMA): quantity(ANGULAR_FREQUENCY),
        vol.Optional(CONF_S_PUMP, default=DEFAULT_S_PUMP): vol.All(
            vol.Coerce(float), vol.Range(min=-MAX_POLARIZATION, max=MAX_POLARIZATION)
        ),
        vol.Optional(CONF_T_PUMP): quantity(TIME),
        vol.Optional(CONF_PHI0, default=DEFAULT_PHI0): vol.Coerce(float),
    },
    extra=vol.PREVENT_EXTRA,
)

SEQUENCE_SCHEMA: Final = vol.Schema(
    {
        vol.Optional(CONF_KIND): vol.In([str(kind) for kind in SequenceKind]),
        vol.Optional(CONF_ECHO_HALF_PERIOD): quantity(TIME),
        vol.Optional(CONF_REPETITION_PERIOD): quantity(TIME),
    },
    extra=vol.PREVENT_EXTRA,
)

SCAN_SCHEMA: Final = vol.Schema(
    {
        vol.Required(CONF_START): _raw_scan_value,
        vol.Required(CONF_STOP): _raw_scan_value,
        vol.Required(CONF_STEP): _raw_scan_value,
        vol.Optional(CONF_DIRECTION, default=DIRECTION_BOTH): vol.In(DIRECTIONS),
        vol.Optional(CONF_OMEGA_INIT, default=0): quantity(ANGULAR_FREQUENCY),
        vol.Optional(CONF_DRIFT_PROBES, default=list): [quantity(ANGULAR_FREQUENCY)],
    },
    extra=vol.PREVENT_EXTRA,
)

GRID_SCHEMA: Final = vol.Schema(
    {
        vol.Optional(CONF_OMEGA_MAX): quantity(ANGULAR_FREQUENCY),
        vol.Optional(CONF_N_CELLS, default=DEFAULT_N_CELLS): vol.All(
            int, vol.Range(min=MIN_N_CELLS)
        ),
    },
    extra=vol.PREVENT_EXTRA,
)

OUTPUT_SCHEMA: Final = vol.Schema(
    {
        vol.Optional(CONF_DIRECTORY, default=DEFAULT_OUTPUT_DIR): str,
        vol.Optional(CONF_PLOT, default=False): bool,
        vol.Optional(CONF_HEATMAP_CELLS, default=DEFAULT_HEATMAP_CELLS): vol.All(
            int, vol.Range(min=1)
        ),
    },
    extra=vol.PREVENT_EXTRA,
)

SECTION_SCHEMAS: Final = {
    SECTION_EXPERIMENT: EXPERIMENT_SCHEMA,
    SECTION_MODEL: MODEL_SCHEMA,
    SECTION_SEQUENCE: SEQUENCE_SCHEMA,
    SECTION_SCAN: SCAN_SCHEMA,
    SECTION_GRID: GRID_SCHEMA,
    SECTION_OUTPUT: OUTPUT_SCHEMA,
}

CONFIG_SCHEMA: Final = vol.Schema(
    {
        vol.Required(SECTION_EXPERIMENT): EXPERIMENT_SCHEMA,
        vol.Optional(SECTION_MODEL, default=dict): MODEL_SCHEMA,
        vol.Optional(SECTION_SEQUENCE, default=dict): SEQUENCE_SCHEMA,
        vol.Required(SECTION_SCAN): SCAN_SCHEMA,
        vol.Optional(SECTION_GRID, default=dict): GRID_SCHEMA,
        vol.Optional(SECTION_OUTPUT, default=dict): OUTPUT_SCHEMA,
    },
    extra=vol.PREVENT_EXTRA,
)


def bundled_config_path(filename: str) -> Path:
    """Return the path of a config shipped with the package."""
    return Path(str(files(__package__).joinpath("configs", filename)))


def default_config_path(experiment: str) -> Path:
    """Return the bundled figure config for an experiment."""
    return bundled_config_path(BUNDLED_CONFIGS[experiment])


def locate_config(path: Path) -> Path:
    """Return ``path``, or the bundled config of that file name if path is missing.

    Raises:
        ConfigError: If neither exists.
    """
    if path.is_file():
        return path
    bundled = bundled_config_path(path.name)
    if path.parent == Path() and bundled.is_file():
        return bundled
    raise ConfigError(f"config file not found: {path}")


def load_config(path: Path) -> dict[str, Any]:
    """Read a TOML config file into a plain dictionary."""
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"invalid TOML in {path}: {err}") from err
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err


def _override_value(text: str) -> Any:
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text.strip()


def _section_for_key(key: str) -> str:
    sections = [
        section
        for section, schema in SECTION_SCHEMAS.items()
        if key in {str(marker) for marker in schema.schema}
    ]
    if len(sections) != 1:
        if sections:
            choices = ", ".join(f"{section}.{key}" for section in sections)
            raise ConfigError(f"ambiguous key, use one of {choices}", field=key)
        raise ConfigError("unknown key", field=key)
    return sections[0]


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Merge ``section.key=value`` overrides into a raw config in place.

    A bare ``key`` is accepted when exactly one section defines it. Values
    are read as TOML literals, falling back to plain strings so that
    ``delta_e=25.3 GHz`` needs no quoting.
    """
    for item in overrides:
        path, sep, text = item.partition("=")
        path = path.strip()
        if not sep or not path:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        section, dot, key = path.rpartition(".")
        if not dot:
            section = _section_for_key(key)
        if section not in SECTION_SCHEMAS:
            raise ConfigError("unknown section", field=section)
        raw.setdefault(section, {})[key] = _override_value(text)
        _LOGGER.debug("Override %s.%s=%r", section, key, raw[section][key])
    return raw


def _sequence_kind(
    file_name: str, name: str, sequence: dict[str, Any]
) -> SequenceKind:
    if CONF_KIND in sequence:
        return SequenceKind(sequence[CONF_KIND])
    for candidate in (file_name, name):
        if candidate in _KIND_FOR_EXPERIMENT:
            return _KIND_FOR_EXPERIMENT[candidate]
    return SequenceKind.ONE_PULSE


def _model_params(model: dict[str, Any]) -> ModelParams:
    kappa = model.get(CONF_KAPPA, DEFAULT_KAPPA)
    t_pump = model.get(CONF_T_PUMP, DEFAULT_T_PUMP)

    if CONF_DIFFUSION in model:
        diffusion = model[CONF_DIFFUSION]
    else:
        diffusion = kappa * model.get(CONF_DIFFUSION_OVER_KAPPA, 0.0)

    if CONF_ALPHA in model:
        alpha = model[CONF_ALPHA]
    elif CONF_ALPHA_OVER_KAPPA in model:
        alpha = kappa * model[CONF_ALPHA_OVER_KAPPA]
    elif CONF_KAPPA_OVER_ALPHA in model:
        if not model[CONF_KAPPA_OVER_ALPHA] > 0:
            raise ConfigError(
                "must be > 0", field=f"{SECTION_MODEL}.{CONF_KAPPA_OVER_ALPHA}"
            )
        alpha = kappa / model[CONF_KAPPA_OVER_ALPHA]
    else:
        alpha = 0.0

    if CONF_BETA0 in model:
        beta0 = model[CONF_BETA0]
    else:
        beta0 = model.get(CONF_BETA0_T_PUMP, DEFAULT_BETA0_T_PUMP) / t_pump

    return ModelParams(
        delta_e=model.get(CONF_DELTA_E, DEFAULT_DELTA_E),
        diffusion_d=diffusion,
        kappa=kappa,
        alpha=alpha,
        beta0=beta0,
        sigma=model.get(CONF_SIGMA, DEFAULT_SIGMA),
        s_pump=model[CONF_S_PUMP],
        t_pump=t_pump,
        phi0=model[CONF_PHI0],
    )


def resolve_config(
    raw: dict[str, Any], name: str | None = None
) -> ExperimentConfig:
    """Validate a raw config and convert it to internal units.

    Args:
        raw: Parsed TOML with overrides applied.
        name: Experiment to run instead of the one named in the file.

    Returns:
        The resolved experiment configuration.

    Raises:
        ConfigError: If a key is unknown, a unit does not fit its field or a
            parameter violates its range.
    """
    try:
        data = CONFIG_SCHEMA(raw)
    except vol.MultipleInvalid as err:
        field = ".".join(str(part) for part in err.path) or None
        raise ConfigError(err.error_message, field=field) from err

    file_name = data[SECTION_EXPERIMENT][CONF_NAME]
    name = name or file_name
    kind = _sequence_kind(file_name, name, data[SECTION_SEQUENCE])
    scan = data[SECTION_SCAN]
    scan_dimension = ANGULAR_FREQUENCY if kind is SequenceKind.ONE_PULSE else TIME

    bounds = {}
    for key in (CONF_START, CONF_STOP, CONF_STEP):
        try:
            bounds[key] = parse_quantity(scan[key], scan_dimension)
        except ValueError as err:
            raise ConfigError(str(err), field=f"{SECTION_SCAN}.{key}") from err

    sequence = data[SECTION_SEQUENCE]
    grid = data[SECTION_GRID]
    output = data[SECTION_OUTPUT]
    try:
        params = _model_params(data[SECTION_MODEL])
        sequence_spec = SequenceSpec(
            kind=kind,
            scan=bounds[CONF_START],
            echo_half_period=sequence.get(CONF_ECHO_HALF_PERIOD),
            repetition_period=sequence.get(CONF_REPETITION_PERIOD, REPETITION_PERIOD),
        )
        return ExperimentConfig(
            name=name,
            params=params,
            sequence=sequence_spec,
            scan=ScanRange(bounds[CONF_START], bounds[CONF_STOP], bounds[CONF_STEP]),
            direction=scan[CONF_DIRECTION],
            output_dir=Path(output[CONF_DIRECTORY]),
            grid=GridOverrides(grid.get(CONF_OMEGA_MAX), grid[CONF_N_CELLS]),
            omega_init=scan[CONF_OMEGA_INIT],
            drift_probes=tuple(scan[CONF_DRIFT_PROBES]),
            heatmap_cells=output[CONF_HEATMAP_CELLS],
            plot=output[CONF_PLOT],
        )
    except InvalidParameterError as err:
        raise ConfigError(str(err)) from err


def _with_unit(value: float, unit: str) -> str:
    return json.dumps(f"{value!r} {unit}")


def dump_config(cfg: ExperimentConfig) -> str:
    """Return the resolved configuration as TOML in internal units.

    Feeding the text back through ``resolve_config`` reproduces ``cfg``.
    """
    p = cfg.params
    scan_unit = UNIT_ANGULAR_FREQUENCY if cfg.sequence.scans_detuning else UNIT_TIME
    lines = [
        f"[{SECTION_EXPERIMENT}]",
        f"{CONF_NAME} = {json.dumps(cfg.name)}",
        "",
        f"[{SECTION_MODEL}]",
        f"{CONF_DELTA_E} = {_with_unit(p.delta_e, UNIT_ANGULAR_FREQUENCY)}",
        f"{CONF_KAPPA} = {_with_unit(p.kappa, UNIT_RATE)}",
        f"{CONF_DIFFUSION} = {_with_unit(p.diffusion_d, UNIT_DIFFUSION)}",
        f"{CONF_ALPHA} = {_with_unit(p.alpha, UNIT_DIFFUSION)}",
        f"{CONF_BETA0} = {_with_unit(p.beta0, UNIT_RATE)}",
        f"{CONF_SIGMA} = {_with_unit(p.sigma, UNIT_ANGULAR_FREQUENCY)}",
        f"{CONF_S_PUMP} = {p.s_pump!r}",
        f"{CONF_T_PUMP} = {_with_unit(p.t_pump, UNIT_TIME)}",
        f"{CONF_PHI0} = {p.phi0!r}",
        "",
        f"[{SECTION_SEQUENCE}]",
        f"{CONF_KIND} = {json.dumps(str(cfg.sequence.kind))}",
        f"{CONF_REPETITION_PERIOD} = "
        f"{_with_unit(cfg.sequence.repetition_period, UNIT_TIME)}",
    ]
    if cfg.sequence.echo_half_period is not None:
        lines.append(
            f"{CONF_ECHO_HALF_PERIOD} = "
            f"{_with_unit(cfg.sequence.echo_half_period, UNIT_TIME)}"
        )
    probes = ", ".join(
        _with_unit(value, UNIT_ANGULAR_FREQUENCY) for value in cfg.drift_probes
    )
    lines += [
        "",
        f"[{SECTION_SCAN}]",
        f"{CONF_START} = {_with_unit(cfg.scan.start, scan_unit)}",
        f"{CONF_STOP} = {_with_unit(cfg.scan.stop, scan_unit)}",
        f"{CONF_STEP} = {_with_unit(cfg.scan.step, scan_unit)}",
        f"{CONF_DIRECTION} = {json.dumps(cfg.direction)}",
        f"{CONF_OMEGA_INIT} = {_with_unit(cfg.omega_init, UNIT_ANGULAR_FREQUENCY)}",
        f"{CONF_DRIFT_PROBES} = [{probes}]",
        "",
        f"[{SECTION_GRID}]",
    ]
    if cfg.grid.omega_max is not None:
        omega_max = _with_unit(cfg.grid.omega_max, UNIT_ANGULAR_FREQUENCY)
        lines.append(f"{CONF_OMEGA_MAX} = {omega_max}")
    lines += [
        f"{CONF_N_CELLS} = {cfg.grid.n_cells}",
        "",
        f"[{SECTION_OUTPUT}]",
        f"{CONF_DIRECTORY} = {json.dumps(str(cfg.output_dir))}",
        f"{CONF_PLOT} = {'true' if cfg.plot else 'false'}",
        f"{CONF_HEATMAP_CELLS} = {cfg.heatmap_cells}",
    ]
    return "\n".join(lines) + "\n"


def load_experiment_config(
    path: Path,
    overrides: list[str] | None = None,
    name: str | None = None,
) -> ExperimentConfig:
    """Load, override and resolve a config file in one call."""
    raw = apply_overrides(load_config(path), overrides or [])
    return resolve_config(raw, name=name)

