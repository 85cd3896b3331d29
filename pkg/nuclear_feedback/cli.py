"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import (
    CONF_DIRECTION,
    CONF_DIRECTORY,
    SECTION_OUTPUT,
    SECTION_SCAN,
    apply_overrides,
    default_config_path,
    dump_config,
    load_config,
    locate_config,
    resolve_config,
)
from .const import (
    DIRECTIONS,
    DOMAIN,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    EXIT_USAGE_ERROR,
    SUBCOMMAND_ATLAS,
    SUBCOMMAND_ECHO,
    SUBCOMMAND_EXPERIMENTS,
    SUBCOMMAND_FID,
    SUBCOMMAND_ONE_PULSE,
    SUBCOMMAND_VALIDATE,
)
from .exceptions import ConfigError, InvalidParameterError, SpinFeedbackError
from .experiments import ExperimentConfig, run_experiment

_LOGGER = logging.getLogger(__name__)

_SUBCOMMAND_HELP = {
    SUBCOMMAND_ONE_PULSE: "one-pulse detuning scans down and up (hysteresis)",
    SUBCOMMAND_FID: "two-pulse Ramsey delay scans (sawtooth fringes)",
    SUBCOMMAND_ECHO: "three-pulse echo steady states versus tau",
    SUBCOMMAND_ATLAS: "all mean-field fixed points along the scan",
    SUBCOMMAND_VALIDATE: "print the resolved configuration and stop",
}


@dataclass(frozen=True)
class CliInvocation:
    """Parsed command line."""

    subcommand: str
    config_path: Path
    output_dir: Path | None = None
    overrides: tuple[str, ...] = field(default_factory=tuple)
    direction: str | None = None
    verbosity: int = logging.INFO


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser with one sub-parser per subcommand."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        type=Path,
        help="TOML config file (default: the bundled figure config)",
    )
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config value, e.g. model.kappa='1 /ns' (repeatable)",
    )
    common.add_argument("--direction", choices=DIRECTIONS, help="sweep direction")
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("--quiet", action="store_true", help="only report warnings")
    noise.add_argument("-v", "--verbose", action="store_true", help="debug output")

    parser = argparse.ArgumentParser(
        prog="nuclear-feedback",
        description="Simulate nuclear-spin feedback on a pulsed quantum-dot spin.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name, text in _SUBCOMMAND_HELP.items():
        subparsers.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _invocation(args: argparse.Namespace) -> CliInvocation:
    if args.config is not None:
        config_path = args.config
    elif args.subcommand == SUBCOMMAND_VALIDATE:
        raise ConfigError("validate needs --config")
    else:
        config_path = default_config_path(SUBCOMMAND_EXPERIMENTS[args.subcommand])

    if args.quiet:
        verbosity = logging.WARNING
    elif args.verbose:
        verbosity = logging.DEBUG
    else:
        verbosity = logging.INFO
    return CliInvocation(
        subcommand=args.subcommand,
        config_path=config_path,
        output_dir=args.out,
        overrides=tuple(args.overrides),
        direction=args.direction,
        verbosity=verbosity,
    )


def _resolve(invocation: CliInvocation) -> ExperimentConfig:
    raw = load_config(locate_config(invocation.config_path))
    overrides = list(invocation.overrides)
    if invocation.direction is not None:
        overrides.append(f"{SECTION_SCAN}.{CONF_DIRECTION}={invocation.direction}")
    raw = apply_overrides(raw, overrides)
    if invocation.output_dir is not None:
        raw.setdefault(SECTION_OUTPUT, {})[CONF_DIRECTORY] = str(invocation.output_dir)
    return resolve_config(raw, name=SUBCOMMAND_EXPERIMENTS.get(invocation.subcommand))


def parse_and_validate(
    argv: Sequence[str] | None = None,
) -> tuple[CliInvocation, ExperimentConfig]:
    """Parse the command line and resolve the configuration.

    File values are overridden by ``--set``, ``--direction`` and ``--out``;
    every value is converted to internal units and checked.

    Raises:
        SystemExit: On a usage error, with exit code 2.
        ConfigError: If the config cannot be read or resolved.
    """
    args = build_parser().parse_args(argv)
    invocation = _invocation(args)
    return invocation, _resolve(invocation)


def dispatch(invocation: CliInvocation, config: ExperimentConfig) -> int:
    """Run the experiment and return the exit code."""
    if invocation.subcommand == SUBCOMMAND_VALIDATE:
        sys.stdout.write(dump_config(config))
        return EXIT_OK
    try:
        written = run_experiment(config)
    except SpinFeedbackError as err:
        _LOGGER.error("%s failed: %s", config.name, err)
        return EXIT_RUNTIME_ERROR
    for path in written:
        print(path)
    return EXIT_OK


def _configure_logging(level: int) -> None:
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger(DOMAIN).setLevel(level)


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line and return the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_USAGE_ERROR

    try:
        invocation = _invocation(args)
        _configure_logging(invocation.verbosity)
        config = _resolve(invocation)
    except (ConfigError, InvalidParameterError) as err:
        _LOGGER.error("%s", err)
        return EXIT_USAGE_ERROR
    return dispatch(invocation, config)
