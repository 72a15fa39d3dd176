# Commands module
from .synth_commands import synth_command
from .discovery_commands import discover_command
from .learning_commands import learn_command
from .evaluation_commands import evaluate_command
from .oracle_commands import oracle_command

COMMANDS = [synth_command, discover_command, learn_command, evaluate_command, oracle_command]

__all__ = ['COMMANDS', 'synth_command', 'discover_command', 'learn_command', 'evaluate_command', 'oracle_command']
