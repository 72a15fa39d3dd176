"""
Command registry
Each command group binds a RunConfig section to a handler, like a router binds a path prefix
"""
import argparse
import json
from dataclasses import dataclass
from typing import Any, Callable, Dict, Type

from pydantic import BaseModel

from exceptions import ConfigError


@dataclass(frozen=True)
class Command:
    name: str
    help: str
    section: str
    schema: Type[BaseModel]
    handler: Callable[[Any], Any]

    def register(self, subparsers) -> argparse.ArgumentParser:
        """One --flag per section field; values are parsed as JSON when possible"""
        parser = subparsers.add_parser(self.name, help=self.help)
        for name, info in self.schema.model_fields.items():
            parser.add_argument(
                f"--{name.replace('_', '-')}",
                dest=name,
                type=_flag_value,
                default=None,
                help=info.description or f"overrides {self.section}.{name}",
            )
        parser.set_defaults(command=self)
        return parser

    def overrides(self, args: argparse.Namespace) -> Dict[str, Any]:
        return {
            name: getattr(args, name)
            for name in self.schema.model_fields
            if getattr(args, name, None) is not None
        }


def _flag_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def require(value, name: str):
    if value is None:
        raise ConfigError(f"missing required setting '{name}'")
    return value
