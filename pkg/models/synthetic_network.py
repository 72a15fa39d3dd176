"""
Synthetic Network Module
Ground-truth testbeds: the linear-Gaussian variable-selection benchmark and layered
ReLU networks whose output is reachable only through designed critical neurons,
with latent mechanisms routed through distinct critical subpaths
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from exceptions import ConfigError, DataError
from preprocessing.artifacts import write_json
from preprocessing.trace_processor import ActivationTrace, LayerMatrix

logger = logging.getLogger(__name__)

VARIANTS = ('pkt', 'normal')
INPUT_LAYER = "input"
OUTPUT_LAYER = "output"
SPEC_MANIFEST = "spec.json"

DEFAULT_SIGNAL = 3.0
PARENT_WEIGHT = (0.8, 1.2)
SIBLING_WEIGHT = (0.0, 0.2)
DECOY_LEAK = 0.15


def layer_names(n_layers: int) -> List[str]:
    """input, hidden_1, ..., hidden_{n-2}, output"""
    if n_layers < 2:
        raise ConfigError(f"a network needs at least 2 layers, got {n_layers}")
    return [INPUT_LAYER] + [f"hidden_{i}" for i in range(1, n_layers - 1)] + [OUTPUT_LAYER]


@dataclass(frozen=True)
class SyntheticSpec:
    """
    A fully specified feed-forward network. weights[l] maps layer l to layer l+1
    (shape width_{l+1} x width_l). Weights from non-critical neurons into critical
    neurons of the next layer are exactly zero.
    """
    layer_widths: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    critical_sets: Optional[List[np.ndarray]] = None
    k_true: int = 1
    mechanism_map: Dict[int, List[List[int]]] = field(default_factory=dict)
    seed: int = 0
    variant: str = 'pkt'
    posterior_map: Optional[np.ndarray] = None
    input_groups: List[np.ndarray] = field(default_factory=list)
    signal: float = DEFAULT_SIGNAL

    def __post_init__(self):
        widths = [int(w) for w in self.layer_widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigError(f"layer_widths must list at least 2 positive widths, got {widths}")
        object.__setattr__(self, 'layer_widths', widths)
        if len(self.weights) != len(widths) - 1 or len(self.biases) != len(widths) - 1:
            raise DataError(f"{len(widths)} layers need {len(widths) - 1} weight matrices and bias vectors")

        weights, biases = [], []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if w.shape != (widths[l + 1], widths[l]):
                raise DataError(f"weights[{l}] has shape {w.shape}, expected {(widths[l + 1], widths[l])}")
            if b.shape != (widths[l + 1],):
                raise DataError(f"biases[{l}] has length {b.size}, expected {widths[l + 1]}")
            weights.append(w)
            biases.append(b)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'biases', biases)

        if self.critical_sets is None:
            critical = [np.arange(w) for w in widths]
        else:
            critical = [np.unique(np.asarray(s, dtype=np.int64)) for s in self.critical_sets]
        if len(critical) != len(widths):
            raise DataError(f"{len(critical)} critical sets for {len(widths)} layers")
        for l, (s, w) in enumerate(zip(critical, widths)):
            if s.size and (s[0] < 0 or s[-1] >= w):
                raise DataError(f"critical_sets[{l}] has indices outside [0, {w})")
        for l, w in enumerate(weights):
            blocked = w[np.ix_(critical[l + 1], self.non_critical(l, critical))]
            if np.any(blocked != 0):
                raise DataError(f"weights[{l}] route non-critical neurons into critical neurons")
        object.__setattr__(self, 'critical_sets', critical)

        if self.k_true < 1:
            raise ConfigError(f"k_true must be at least 1, got {self.k_true}")
        if self.posterior_map is None:
            mapping = np.arange(self.k_true) * widths[-1] // self.k_true
        else:
            mapping = np.asarray(self.posterior_map, dtype=np.int64)
        object.__setattr__(self, 'posterior_map', mapping)

    def non_critical(self, layer: int, critical=None) -> np.ndarray:
        critical = self.critical_sets if critical is None else critical
        return np.setdiff1d(np.arange(self.layer_widths[layer]), critical[layer])

    @property
    def layer_ids(self) -> List[str]:
        return layer_names(len(self.layer_widths))

    @property
    def n_outputs(self) -> int:
        return self.layer_widths[-1]

    @property
    def critical_widths(self) -> List[int]:
        return [int(s.size) for s in self.critical_sets]

    def layer_index(self, layer_id: str) -> int:
        try:
            return self.layer_ids.index(layer_id)
        except ValueError:
            raise DataError(f"unknown layer id '{layer_id}' (known: {self.layer_ids})") from None

    def to_manifest(self) -> dict:
        return {
            'variant': self.variant,
            'seed': int(self.seed),
            'k_true': int(self.k_true),
            'signal': float(self.signal),
            'layer_ids': self.layer_ids,
            'layer_widths': self.layer_widths,
            'critical_widths': self.critical_widths,
            'critical_sets': [s.tolist() for s in self.critical_sets],
            'posterior_map': self.posterior_map.tolist(),
            'mechanism_map': {str(m): groups for m, groups in self.mechanism_map.items()},
        }


# ---------------------------------------------------------------------------
# Critical-path networks
# ---------------------------------------------------------------------------

def _check_capacity(widths: List[int], critical: List[int], k_true: int, variant: str):
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got '{variant}'")
    if len(widths) < 2 or min(widths) < 1:
        raise ConfigError(f"layer_widths must list at least 2 positive widths, got {widths}")
    if len(critical) != len(widths):
        raise ConfigError(f"critical_widths has {len(critical)} entries, layer_widths has {len(widths)}")
    if k_true < 1:
        raise ConfigError(f"k_true must be at least 1, got {k_true}")
    for l, (c, w) in enumerate(zip(critical, widths)):
        if not 1 <= c <= w:
            raise ConfigError(f"critical_widths[{l}]={c} must lie in [1, layer_widths[{l}]={w}]")
    if critical[-1] != widths[-1]:
        raise ConfigError(f"critical_widths[-1]={critical[-1]} must equal the output width {widths[-1]}")
    if critical[0] < k_true:
        raise ConfigError(f"critical_widths[0]={critical[0]} is below k_true={k_true}")
    needed = k_true if variant == 'pkt' else widths[-1]
    for l in range(1, len(widths) - 1):
        if critical[l] < needed:
            raise ConfigError(f"critical_widths[{l}]={critical[l]} cannot route {needed} groups")


def _route(rng, weights, target_group, feeders):
    """Each target neuron gets a private parent and weak sibling weights from its feeder groups"""
    if not feeders:
        return
    width = max(len(f) for f in feeders)
    for position, neuron in enumerate(target_group):
        vector = rng.uniform(*SIBLING_WEIGHT, size=width)
        vector[position % width] = rng.uniform(*PARENT_WEIGHT)
        # Every feeder group sees the same vector
        for feeder in feeders:
            weights[neuron, feeder] = vector[:len(feeder)]


def generate_spec(
    layer_widths: Sequence[int],
    critical_widths: Sequence[int],
    k_true: int,
    seed: int,
    variant: str = 'pkt',
    signal: float = DEFAULT_SIGNAL,
) -> SyntheticSpec:
    """
    Build a critical-path network.
    pkt: every latent mechanism m owns critical group m at every hidden layer.
    normal: hidden critical groups follow the coarse label only; the first hidden layer
    reads all input groups of a class with identical weights, erasing latent identity.
    """
    widths = [int(w) for w in layer_widths]
    critical = [int(c) for c in critical_widths]
    _check_capacity(widths, critical, k_true, variant)

    rng = np.random.default_rng(seed)
    n_out = widths[-1]
    last = len(widths) - 1
    critical_sets = [np.sort(rng.choice(w, size=c, replace=False)) for w, c in zip(widths, critical)]
    posterior_map = np.arange(k_true) * n_out // k_true

    groups, group_class = [], []
    for l, members in enumerate(critical_sets):
        if l == last:
            groups.append([members])
            group_class.append(np.zeros(1, dtype=np.int64))
        elif l == 0 or variant == 'pkt':
            groups.append(np.array_split(members, k_true))
            group_class.append(posterior_map)
        else:
            groups.append(np.array_split(members, n_out))
            group_class.append(np.arange(n_out))

    weights = []
    for l in range(last):
        w = np.zeros((widths[l + 1], widths[l]))
        if l + 1 == last:
            for g, members in enumerate(groups[l]):
                for o in range(n_out):
                    if group_class[l][g] == o:
                        w[o, members] = 1.0 / len(members)
                    else:
                        w[o, members] = -1.0 / (len(members) * max(1, n_out - 1))
        else:
            for g, target_group in enumerate(groups[l + 1]):
                if variant == 'normal' and l == 0:
                    feeders = [groups[0][m] for m in range(k_true) if posterior_map[m] == g]
                else:
                    feeders = [groups[l][g]]
                _route(rng, w, target_group, feeders)

            sources = np.setdiff1d(np.arange(widths[l]), critical_sets[l])
            for neuron in np.setdiff1d(np.arange(widths[l + 1]), critical_sets[l + 1]):
                if sources.size:
                    w[neuron, sources] = rng.normal(0.0, 1.0 / np.sqrt(sources.size), size=sources.size)
                w[neuron, rng.choice(critical_sets[l])] = DECOY_LEAK
        weights.append(w)

    mechanism_map = {}
    for m in range(k_true):
        path = []
        for l in range(len(widths)):
            if l == last:
                path.append([int(posterior_map[m])])
            elif l == 0 or variant == 'pkt':
                path.append(groups[l][m].tolist())
            else:
                path.append(groups[l][posterior_map[m]].tolist())
        mechanism_map[m] = path

    logger.debug("generated %s network widths=%s critical=%s k_true=%d", variant, widths, critical, k_true)
    return SyntheticSpec(
        layer_widths=widths,
        weights=weights,
        biases=[np.zeros(w) for w in widths[1:]],
        critical_sets=critical_sets,
        k_true=k_true,
        mechanism_map=mechanism_map,
        seed=seed,
        variant=variant,
        posterior_map=posterior_map,
        input_groups=list(groups[0]),
        signal=signal,
    )


def prior_knowledge_pair(
    layer_widths: Sequence[int],
    critical_widths: Sequence[int],
    k_true: int,
    seed: int,
    signal: float = DEFAULT_SIGNAL,
) -> Tuple[SyntheticSpec, SyntheticSpec]:
    """(pkt_spec, normal_spec) sharing critical sets, input groups and input distribution"""
    pkt = generate_spec(layer_widths, critical_widths, k_true, seed, variant='pkt', signal=signal)
    normal = generate_spec(layer_widths, critical_widths, k_true, seed, variant='normal', signal=signal)
    return pkt, normal


def sample_dataset(spec: SyntheticSpec, n: int, class_balance=None, seed: int = 0):
    """
    Draw latent mechanisms and inputs.
    Returns (inputs, latent_c, prior_labels, posterior_labels); prior labels are the
    latent mechanisms, posterior labels their coarse grouping.
    """
    if n < 1:
        raise DataError(f"sample count must be positive, got {n}")
    k = spec.k_true
    if class_balance is None:
        probs = np.full(k, 1.0 / k)
    else:
        probs = np.asarray(class_balance, dtype=np.float64)
        if probs.shape != (k,) or np.any(probs < 0) or probs.sum() <= 0:
            raise DataError(f"class_balance must be {k} nonnegative weights")
        probs = probs / probs.sum()

    rng = np.random.default_rng(seed)
    latent = rng.choice(k, size=n, p=probs)
    inputs = rng.standard_normal((n, spec.layer_widths[0]))
    for m, group in enumerate(spec.input_groups):
        rows = np.flatnonzero(latent == m)
        inputs[np.ix_(rows, group)] += spec.signal
    return inputs, latent, latent.copy(), spec.posterior_map[latent]


def _noise_vector(noise, n: int, width: int, layer_id: str) -> np.ndarray:
    vector = np.asarray(getattr(noise, 'noise', noise), dtype=np.float64)
    if vector.shape not in ((width,), (n, width)):
        raise DataError(f"noise for layer '{layer_id}' has shape {vector.shape}, layer width is {width}")
    return vector


def forward(
    spec: SyntheticSpec,
    inputs,
    noise: Optional[Tuple[str, object]] = None,
    zero_non_critical: Sequence[str] = (),
    response_class: Optional[int] = None,
) -> Tuple[ActivationTrace, np.ndarray]:
    """
    Z_{l+1} = relu(W_l Z_l + b_l) with a linear output layer.
    noise = (layer_id, schedule or array) is added to that layer's values before they
    propagate; zero_non_critical lists layers whose non-critical neurons are silenced.
    Returns the trace (response = logit of response_class, default the last class)
    and the argmax predictions.
    """
    z = np.asarray(inputs, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != spec.layer_widths[0]:
        raise DataError(f"input width mismatch: got {z.shape}, network expects {spec.layer_widths[0]} inputs")
    n = z.shape[0]

    ids = spec.layer_ids
    noise_layer, noise_values = (None, None) if noise is None else noise
    if noise_layer is not None:
        index = spec.layer_index(noise_layer)
        noise_values = _noise_vector(noise_values, n, spec.layer_widths[index], noise_layer)
    silenced = {spec.layer_index(layer_id) for layer_id in zero_non_critical}

    values = []
    for l, layer_id in enumerate(ids):
        if l > 0:
            z = z @ spec.weights[l - 1].T + spec.biases[l - 1]
            if l < len(ids) - 1:
                z = np.maximum(z, 0.0)
        if layer_id == noise_layer:
            z = z + noise_values
        if l in silenced:
            z = z.copy()
            z[:, spec.non_critical(l)] = 0.0
        values.append(z)

    logits = values[-1]
    response_class = spec.n_outputs - 1 if response_class is None else response_class
    if not 0 <= response_class < spec.n_outputs:
        raise DataError(f"response_class {response_class} outside [0, {spec.n_outputs})")
    trace = ActivationTrace(
        layers=tuple(LayerMatrix(layer_id, z) for layer_id, z in zip(ids, values)),
        response=logits[:, response_class],
    )
    return trace, np.argmax(logits, axis=1)


@dataclass(frozen=True)
class Simulation:
    inputs: np.ndarray
    trace: ActivationTrace
    predictions: np.ndarray
    latent_c: np.ndarray


def simulate_trace(
    spec: SyntheticSpec,
    n: int,
    seed: int,
    class_balance=None,
    response_class: Optional[int] = None,
) -> Simulation:
    """Sample inputs, run the clean forward pass and attach prior/posterior labels"""
    inputs, latent, prior, posterior = sample_dataset(spec, n, class_balance=class_balance, seed=seed)
    trace, predictions = forward(spec, inputs, response_class=response_class)
    trace = trace.with_labels(prior_labels=prior, posterior_labels=posterior)
    return Simulation(inputs=inputs, trace=trace, predictions=predictions, latent_c=latent)


def save_spec_manifest(spec: SyntheticSpec, path) -> Path:
    target = Path(path)
    if target.suffix != '.json':
        target = target / SPEC_MANIFEST
    write_json(target, spec.to_manifest())
    return target


def load_spec_manifest(path) -> SyntheticSpec:
    """Regenerate the network recorded in a spec manifest"""
    source = Path(path)
    if source.is_dir():
        source = source / SPEC_MANIFEST
    if not source.exists():
        raise DataError(f"missing file: {source}")
    try:
        manifest = json.loads(source.read_text(encoding='utf-8'))
        spec = generate_spec(
            manifest['layer_widths'],
            manifest['critical_widths'],
            manifest['k_true'],
            manifest['seed'],
            variant=manifest['variant'],
            signal=manifest.get('signal', DEFAULT_SIGNAL),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"malformed spec manifest {source}: {exc}") from exc
    recorded = manifest.get('critical_sets')
    if recorded is not None and [list(s) for s in recorded] != [s.tolist() for s in spec.critical_sets]:
        raise DataError(f"spec manifest {source} does not match the regenerated network")
    return spec


# ---------------------------------------------------------------------------
# Linear-Gaussian benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearGaussianCase:
    p: int
    support: np.ndarray
    beta: np.ndarray
    noise_sd: float
    n: int
    rho: float = 0.0


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    return linalg.toeplitz(rho ** np.arange(p))


def linear_gaussian_design(
    p: int,
    support_size: int,
    amplitude: float,
    rho: float,
    n: int,
    seed: int,
    noise_sd: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray, LinearGaussianCase]:
    """x ~ Normal(0, AR(1) rho), y = x beta + Normal(0, noise_sd^2), beta = +-amplitude on the support"""
    if p < 1 or n < 1:
        raise ConfigError(f"p and n must be positive, got p={p}, n={n}")
    if not 0 <= support_size <= p:
        raise ConfigError(f"support_size={support_size} must lie in [0, p={p}]")
    if not 0.0 <= rho < 1.0:
        raise ConfigError(f"rho must lie in [0, 1), got {rho}")

    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(p, size=support_size, replace=False))
    beta = np.zeros(p)
    beta[support] = amplitude * rng.choice([-1.0, 1.0], size=support_size)

    x = rng.standard_normal((n, p))
    if rho > 0:
        x = x @ linalg.cholesky(ar1_covariance(p, rho), lower=True).T
    y = x @ beta + noise_sd * rng.standard_normal(n)
    if amplitude == 0:
        support = np.array([], dtype=np.int64)
    case = LinearGaussianCase(p=p, support=support, beta=beta, noise_sd=noise_sd, n=n, rho=rho)
    return x, y, case


def linear_gaussian_case(p: int, support_size: int, amplitude: float, rho: float, n: int, seed: int):
    """(x, y, support) of one benchmark draw"""
    x, y, case = linear_gaussian_design(p, support_size, amplitude, rho, n, seed)
    return x, y, case.support
