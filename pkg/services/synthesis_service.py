"""
Synthesis Service
Writes synthetic testbeds as trace directories with a replayable spec manifest
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from exceptions import DataError
from models.synthetic_network import (
    SPEC_MANIFEST, Simulation, SyntheticSpec, forward, generate_spec, linear_gaussian_design,
    load_spec_manifest, prior_knowledge_pair, sample_dataset, simulate_trace,
)
from preprocessing.artifacts import write_json
from preprocessing.trace_processor import ActivationTrace, LayerMatrix, save_trace

logger = logging.getLogger(__name__)

LINEAR_LAYER = "x"


def sample_stream(seed: int) -> List[int]:
    """Input sampling stream, kept apart from the network construction stream"""
    return [int(seed), 1]


def write_network_trace(spec: SyntheticSpec, n: int, seed: int, out_dir, response_class: Optional[int] = None) -> Path:
    """Simulate n samples through spec and write the trace plus spec.json"""
    out_dir = Path(out_dir)
    stream = sample_stream(seed)
    simulation = simulate_trace(spec, n, stream, response_class=response_class)
    save_trace(simulation.trace, out_dir)
    manifest = spec.to_manifest()
    manifest['samples'] = {'n': int(n), 'seed': stream, 'response_class': response_class}
    manifest['accuracy'] = float(np.mean(simulation.predictions == simulation.trace.posterior_labels))
    write_json(out_dir / SPEC_MANIFEST, manifest)
    logger.info("%s network: %d samples, posterior accuracy %.3f -> %s",
                spec.variant, n, manifest['accuracy'], out_dir)
    return out_dir


def load_simulation(trace_dir) -> Simulation:
    """Regenerate network and inputs recorded in a trace directory's spec.json"""
    source = Path(trace_dir) / SPEC_MANIFEST
    spec = load_spec_manifest(source)
    manifest = json.loads(source.read_text(encoding='utf-8'))
    samples = manifest.get('samples')
    if not samples:
        raise DataError(f"{source} records no sample stream")
    inputs, latent, prior, posterior = sample_dataset(spec, samples['n'], seed=samples['seed'])
    trace, predictions = forward(spec, inputs, response_class=samples.get('response_class'))
    trace = trace.with_labels(prior_labels=prior, posterior_labels=posterior)
    return Simulation(inputs=inputs, trace=trace, predictions=predictions, latent_c=latent)


def load_network(trace_dir) -> SyntheticSpec:
    return load_spec_manifest(Path(trace_dir) / SPEC_MANIFEST)


def linear_trace(x: np.ndarray, y: np.ndarray) -> ActivationTrace:
    """Single-layer trace holding the design matrix as neurons and y as the response"""
    return ActivationTrace(layers=(LayerMatrix(LINEAR_LAYER, x),), response=y)


class SynthesisService:
    """
    Service class for writing synthetic testbeds
    """

    def __init__(self, n_samples: int = 2000, response_class: Optional[int] = None):
        self.n_samples = n_samples
        self.response_class = response_class

    def pair(self, layer_widths: Sequence[int], critical_widths: Sequence[int], k_true: int,
             seed: int, out_dir) -> Dict[str, Path]:
        """pkt/ and normal/ trace directories sharing one input sample"""
        out_dir = Path(out_dir)
        pkt, normal = prior_knowledge_pair(layer_widths, critical_widths, k_true, seed)
        return {
            spec.variant: write_network_trace(spec, self.n_samples, seed, out_dir / spec.variant, self.response_class)
            for spec in (pkt, normal)
        }

    def single(self, layer_widths: Sequence[int], critical_widths: Sequence[int], k_true: int,
               seed: int, out_dir, variant: str = 'pkt') -> Dict[str, Path]:
        spec = generate_spec(layer_widths, critical_widths, k_true, seed, variant=variant)
        return {variant: write_network_trace(spec, self.n_samples, seed, out_dir, self.response_class)}

    def linear(self, p: int, support_size: int, amplitude: float, rho: float, seed: int, out_dir) -> Dict[str, Path]:
        out_dir = Path(out_dir)
        x, y, case = linear_gaussian_design(p, support_size, amplitude, rho, self.n_samples, seed)
        save_trace(linear_trace(x, y), out_dir)
        write_json(out_dir / SPEC_MANIFEST, {
            'variant': 'linear',
            'seed': int(seed),
            'p': int(p),
            'n': int(self.n_samples),
            'rho': float(rho),
            'amplitude': float(amplitude),
            'noise_sd': float(case.noise_sd),
            'support': case.support.tolist(),
        })
        logger.info("linear-gaussian case p=%d n=%d support=%d -> %s", p, self.n_samples, case.support.size, out_dir)
        return {'linear': out_dir}
