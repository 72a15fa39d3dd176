"""
NeuCEPT command-line toolkit
Main application entry point
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from commands import COMMANDS
from config import LOG_FORMAT, LOG_LEVEL
from exceptions import ConfigError, DataError, NumericalError
from schemas import RunConfig

logger = logging.getLogger("neucept")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they share the config exit code"""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="neucept",
        description="Critical-neuron discovery and mechanism learning on activation traces",
    )
    parser.add_argument("--config", type=Path, default=None, help="run configuration file (JSON)")
    parser.add_argument("--log-level", default=None, help="overrides NEUCEPT_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command_name", required=True)

    # Register commands
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level.upper())


def load_run_config(path, section: str, overrides: dict) -> RunConfig:
    """Config file first, then command-line flags for the active section"""
    payload = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: expected a JSON object")
    merged = dict(payload.get(section) or {})
    merged.update(overrides)
    payload[section] = merged
    return RunConfig.model_validate(payload)


def describe_validation_error(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in error['loc']) or 'config'}: {error['msg']}"
        for error in exc.errors()
    )


def main(argv=None) -> int:
    configure_logging(LOG_LEVEL)
    try:
        args = build_parser().parse_args(argv)
        if args.log_level:
            configure_logging(args.log_level)
        command = args.command
        config = load_run_config(args.config, command.section, command.overrides(args))
        result = command.handler(getattr(config, command.section))
    except ValidationError as exc:
        logger.error("invalid configuration: %s", describe_validation_error(exc))
        return EXIT_CONFIG
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except OSError as exc:
        logger.error("i/o error: %s", exc)
        return EXIT_DATA
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL

    print(json.dumps({'command': command.name, 'output': result}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
