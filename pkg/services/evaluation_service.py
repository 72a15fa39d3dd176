"""
Evaluation Service
Clusters' entropy of mechanism assignments, CE sweeps over k, CE differences
between two models and the ablation-noise protocol
"""
import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import entropy
from sklearn.metrics.cluster import contingency_matrix

from config import N_JOBS
from exceptions import ConfigError, DataError
from models.synthetic_network import SyntheticSpec, forward
from preprocessing.trace_processor import ActivationTrace
from services.discovery_service import (
    DiscoveryService, SelectionResult, baseline_activation_select,
)
from services.learning_service import LearningService

logger = logging.getLogger(__name__)

SELECTORS = ('neucept', 'activation', 'all')
SCORE_MODES = ('binary', 'frequency')
BEST_K_TOLERANCE = 0.05

NeuronSet = Union[Sequence[SelectionResult], Dict[str, Sequence[int]]]


# ---------------------------------------------------------------------------
# Clusters' entropy
# ---------------------------------------------------------------------------

def label_entropy(labels) -> float:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return float(entropy(counts, base=2))


def clusters_entropy(c, y_prior) -> float:
    """Empirical H(Y_prior | C) in bits"""
    c = np.asarray(c).reshape(-1)
    y_prior = np.asarray(y_prior).reshape(-1)
    if c.shape != y_prior.shape:
        raise DataError(f"length mismatch: {c.size} cluster labels, {y_prior.size} prior labels")
    if c.size == 0:
        raise DataError("clusters' entropy needs at least one sample")
    table = contingency_matrix(y_prior, c)
    cluster_sizes = table.sum(axis=0)
    h = sum(size / c.size * entropy(table[:, j], base=2) for j, size in enumerate(cluster_sizes))
    return float(max(0.0, h))


@dataclass
class CeCurve:
    k_values: List[int]
    ce_bits: List[float]
    method: str
    selector: str
    h_prior: Optional[float] = None

    def argmin(self) -> int:
        return self.k_values[int(np.argmin(self.ce_bits))]

    def best_k(self, tolerance: float = BEST_K_TOLERANCE) -> int:
        """Smallest k whose CE lies within tolerance bits of the curve minimum"""
        floor = min(self.ce_bits)
        for k, ce in zip(self.k_values, self.ce_bits):
            if ce <= floor + tolerance:
                return k
        return self.argmin()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'selector': self.selector,
            'method': self.method,
            'k': self.k_values,
            'ce_bits': self.ce_bits,
        })


# ---------------------------------------------------------------------------
# Neuron selectors
# ---------------------------------------------------------------------------

def selection_from_indices(trace: ActivationTrace, layer_id: str, indices: Sequence[int], statistic: str) -> SelectionResult:
    width = trace.layer(layer_id).n_neurons
    frequency = np.zeros(width)
    frequency[list(indices)] = 1.0
    return SelectionResult(
        layer_id=layer_id,
        q=math.nan,
        tau=math.inf,
        selected=sorted(int(j) for j in indices),
        frequency=frequency,
        w_mean=frequency.copy(),
        statistic=statistic,
        n_retained=width,
    )


def as_selections(trace: ActivationTrace, neuron_set: NeuronSet) -> List[SelectionResult]:
    if isinstance(neuron_set, dict):
        return [selection_from_indices(trace, lid, idx, 'given') for lid, idx in neuron_set.items()]
    return list(neuron_set)


def select_neurons(
    trace: ActivationTrace,
    selector: str,
    layer_ids: Optional[Sequence[str]] = None,
    q=None,
    seed: int = 0,
    discovery: Optional[DiscoveryService] = None,
    activation_k: Optional[int] = None,
) -> List[SelectionResult]:
    """
    neucept: knockoff discovery. activation: top-k mean activation, k matching
    the discovered set size unless activation_k is given. all: every neuron.
    """
    if selector not in SELECTORS:
        raise ConfigError(f"selector must be one of {SELECTORS}, got '{selector}'")
    layer_ids = list(trace.layer_ids[:-1] or trace.layer_ids) if layer_ids is None else list(layer_ids)
    if selector == 'all':
        return [selection_from_indices(trace, lid, range(trace.layer(lid).n_neurons), 'all') for lid in layer_ids]

    discovery = discovery or DiscoveryService()
    if selector == 'neucept':
        return discovery.discover(trace, layer_ids, q, seed)

    if activation_k is None:
        sizes = {r.layer_id: len(r.selected) for r in discovery.discover(trace, layer_ids, q, seed)}
    else:
        sizes = {lid: min(activation_k, trace.layer(lid).n_neurons) for lid in layer_ids}
    return [
        selection_from_indices(
            trace, lid,
            baseline_activation_select(trace, lid, sizes[lid], all_samples=discovery.options['all_samples']),
            'activation',
        )
        for lid in layer_ids
    ]


# ---------------------------------------------------------------------------
# CE curves
# ---------------------------------------------------------------------------

def ce_curve(
    trace: ActivationTrace,
    neuron_set: NeuronSet,
    k_range: Sequence[int],
    method: str = 'kmeans',
    seed: int = 0,
    selector: str = 'given',
    learning: Optional[LearningService] = None,
) -> CeCurve:
    """Cluster the neuron set's activations for every k and score CE against prior labels"""
    k_values = [int(k) for k in k_range]
    if not k_values:
        raise ConfigError("k_range must not be empty")
    if trace.prior_labels is None:
        raise DataError("trace is missing prior_labels")
    learning = learning or LearningService(method=method)
    if learning.method != method:
        learning = LearningService(method=method, limits=learning.limits, top_k=learning.top_k,
                                   all_samples=learning.all_samples, n_jobs=learning.n_jobs, **learning.params)
    y_prior = trace.prior_labels[trace.masked_rows(learning.all_samples)]
    assignments = learning.sweep(trace, as_selections(trace, neuron_set), k_values, seed=seed)
    ce_bits = [clusters_entropy(a.c, y_prior) for a in assignments]
    logger.info("CE curve (%s, %s): %s", selector, method,
                ", ".join(f"k={k}:{ce:.3f}" for k, ce in zip(k_values, ce_bits)))
    return CeCurve(k_values=k_values, ce_bits=ce_bits, method=method, selector=selector,
                   h_prior=label_entropy(y_prior))


def ce_difference(
    trace_a: ActivationTrace,
    trace_b: ActivationTrace,
    selector: str,
    k_range: Sequence[int],
    method: str = 'kmeans',
    seed: int = 0,
    layer_ids: Optional[Sequence[str]] = None,
    q=None,
    discovery: Optional[DiscoveryService] = None,
    learning: Optional[LearningService] = None,
) -> List[float]:
    """CE_a(k) - CE_b(k) with discovery and learning run independently per trace"""
    for name, trace in (('trace_a', trace_a), ('trace_b', trace_b)):
        if trace.prior_labels is None:
            raise DataError(f"{name} is missing prior_labels")
    if set(np.unique(trace_a.prior_labels)) != set(np.unique(trace_b.prior_labels)):
        raise DataError("prior label alphabets of the two traces differ")

    curves = []
    for trace in (trace_a, trace_b):
        selections = select_neurons(trace, selector, layer_ids, q, seed, discovery)
        curves.append(ce_curve(trace, selections, k_range, method, seed, selector, learning))
    return [a - b for a, b in zip(curves[0].ce_bits, curves[1].ce_bits)]


# ---------------------------------------------------------------------------
# Ablation noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSchedule:
    base: np.ndarray
    scores: np.ndarray
    gamma: float
    level: float
    noise: np.ndarray
    weights: np.ndarray = field(default=None)


def noise_schedule(
    scores,
    gamma: float,
    level: float,
    seed: int,
    reference_scale: float = 1.0,
    n_samples: Optional[int] = None,
) -> NoiseSchedule:
    """
    base delta ~ U[0, 1] from seed (independent of scores), weights delta * 2^(-gamma s),
    noise = weights scaled so that mean(noise) = level * reference_scale.
    n_samples draws one delta row per sample.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if np.any((scores < 0) | (scores > 1)):
        raise DataError("scores must lie in [0, 1]")
    if gamma < 0:
        raise DataError(f"gamma must be nonnegative, got {gamma}")
    if level < 0:
        raise DataError(f"noise level must be nonnegative, got {level}")

    shape = scores.shape if n_samples is None else (n_samples, scores.size)
    base = np.random.default_rng(seed).uniform(0.0, 1.0, size=shape)
    weights = base * np.exp2(-gamma * scores)
    mean_weight = weights.mean() if weights.size else 0.0
    if level == 0 or mean_weight == 0:
        noise = np.zeros_like(weights)
    else:
        noise = weights * (level * reference_scale / mean_weight)
    return NoiseSchedule(base=base, scores=scores, gamma=gamma, level=level, noise=noise, weights=weights)


def scores_from_selection(result: SelectionResult, mode: str = 'binary') -> np.ndarray:
    """binary: 1 on the selected set; frequency: selection frequency as a continuous score"""
    if mode == 'binary':
        scores = np.zeros(result.width)
        scores[result.selected] = 1.0
        return scores
    if mode == 'frequency':
        return np.clip(result.frequency, 0.0, 1.0)
    raise ConfigError(f"score mode must be one of {SCORE_MODES}, got '{mode}'")


def random_scores(width: int, size: int, seed: int) -> np.ndarray:
    """Binary scores on a uniformly drawn set of `size` neurons"""
    scores = np.zeros(width)
    scores[np.random.default_rng(seed).choice(width, size=min(size, width), replace=False)] = 1.0
    return scores


def activation_scale(spec: SyntheticSpec, inputs, layer_id: str) -> float:
    """mean |clean activation| of a layer, the unit of the noise level"""
    trace, _ = forward(spec, inputs)
    return float(np.mean(np.abs(trace.layer(layer_id).data)))


def ablation_run(spec: SyntheticSpec, inputs, layer_id: str, schedule: NoiseSchedule, labels) -> float:
    """Accuracy of predictions with the schedule's noise added at layer_id"""
    labels = np.asarray(labels).reshape(-1)
    _, predictions = forward(spec, inputs, noise=(layer_id, schedule))
    if predictions.shape != labels.shape:
        raise DataError(f"{labels.size} labels for {predictions.size} samples")
    return float(np.mean(predictions == labels))


def _ablation_row(spec, inputs, labels, layer_id, selector, scores, level, gamma, seed, reference_scale, per_sample):
    n_samples = len(labels) if per_sample else None
    schedule = noise_schedule(scores, gamma, level, seed, reference_scale, n_samples=n_samples)
    _, predictions = forward(spec, inputs, noise=(layer_id, schedule))
    row = {
        'selector': selector,
        'layer_id': layer_id,
        'level': level,
        'gamma': gamma,
        'seed': seed,
        'accuracy': float(np.mean(predictions == labels)),
    }
    for cls in np.unique(labels):
        members = labels == cls
        row[f'accuracy_class_{int(cls)}'] = float(np.mean(predictions[members] == cls))
    return row


def ablation_grid(
    spec: SyntheticSpec,
    inputs,
    labels,
    layer_id: str,
    score_sets: Dict[str, np.ndarray],
    levels: Sequence[float],
    gammas: Sequence[float],
    seeds: Sequence[int],
    reference_scale: Optional[float] = None,
    per_sample: bool = False,
    n_jobs: int = N_JOBS,
) -> pd.DataFrame:
    """Accuracy per (selector, level, gamma, seed), ordered by parameters"""
    labels = np.asarray(labels).reshape(-1)
    if reference_scale is None:
        reference_scale = activation_scale(spec, inputs, layer_id)
    combos = list(product(score_sets.items(), levels, gammas, seeds))
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_ablation_row)(
            spec, inputs, labels, layer_id, selector, scores, float(level), float(gamma), int(seed),
            reference_scale, per_sample,
        )
        for (selector, scores), level, gamma, seed in combos
    )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Selection quality against ground truth
# ---------------------------------------------------------------------------

def false_discovery_proportion(selected, truth) -> float:
    """|S minus T| / |S| with 0/0 = 0"""
    selected = set(int(j) for j in selected)
    if not selected:
        return 0.0
    return len(selected - set(int(j) for j in truth)) / len(selected)


def power(selected, truth) -> float:
    """|S and T| / |T|; an empty truth gives 0"""
    truth = set(int(j) for j in truth)
    if not truth:
        return 0.0
    return len(truth & set(int(j) for j in selected)) / len(truth)


def decoy_selection_rate(selected, critical, width: int) -> float:
    """Fraction of non-critical neurons that were selected"""
    decoys = set(range(width)) - set(int(j) for j in critical)
    if not decoys:
        return 0.0
    return len(decoys & set(int(j) for j in selected)) / len(decoys)


def mechanism_precision(c, predictions, truth, positive_class: int) -> pd.DataFrame:
    """Per-mechanism precision of the predictions for positive_class"""
    c = np.asarray(c).reshape(-1)
    predictions = np.asarray(predictions).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if not c.shape == predictions.shape == truth.shape:
        raise DataError("mechanism labels, predictions and truth differ in length")
    rows = []
    for mechanism in np.unique(c):
        members = c == mechanism
        predicted = members & (predictions == positive_class)
        n_predicted = int(predicted.sum())
        rows.append({
            'mechanism': int(mechanism),
            'n_samples': int(members.sum()),
            'n_predicted': n_predicted,
            'precision': float(np.mean(truth[predicted] == positive_class)) if n_predicted else math.nan,
        })
    return pd.DataFrame(rows)


class EvaluationService:
    """
    Service class for CE sweeps and ablation grids
    """

    def __init__(self, discovery: Optional[DiscoveryService] = None, learning: Optional[LearningService] = None):
        self.discovery = discovery or DiscoveryService()
        self.learning = learning or LearningService()

    def ce_curve(self, trace, selector: str, k_range, seed: int = 0, layer_ids=None, q=None,
                 activation_k: Optional[int] = None) -> CeCurve:
        selections = select_neurons(trace, selector, layer_ids, q, seed, self.discovery, activation_k)
        return ce_curve(trace, selections, k_range, self.learning.method, seed, selector, self.learning)

    def ce_difference(self, trace_a, trace_b, selector: str, k_range, seed: int = 0, layer_ids=None, q=None) -> pd.DataFrame:
        diffs = ce_difference(trace_a, trace_b, selector, k_range, self.learning.method, seed,
                              layer_ids, q, self.discovery, self.learning)
        return pd.DataFrame({
            'selector': selector,
            'method': self.learning.method,
            'k': list(k_range),
            'ce_difference_bits': diffs,
        })
