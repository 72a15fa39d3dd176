"""
Synth command
Writes synthetic testbeds (network pair, single network or linear-Gaussian case)
"""
import logging

from commands.base import Command
from schemas import SynthConfig
from services import SynthesisService

logger = logging.getLogger(__name__)


def cmd_synth(config: SynthConfig) -> dict:
    """Trace directories plus spec manifests under config.out"""
    service = SynthesisService(n_samples=config.n_samples, response_class=config.response_class)
    if config.variant == 'linear':
        written = service.linear(config.p, config.support_size, config.amplitude, config.rho, config.seed, config.out)
    elif config.variant == 'single':
        written = service.single(config.layer_widths, config.critical_widths, config.k_true, config.seed,
                                 config.out, variant=config.network_variant)
    else:
        written = service.pair(config.layer_widths, config.critical_widths, config.k_true, config.seed, config.out)
    return {name: str(path) for name, path in written.items()}


synth_command = Command(
    name="synth",
    help="write synthetic trace directories",
    section="synth",
    schema=SynthConfig,
    handler=cmd_synth,
)
