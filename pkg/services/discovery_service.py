"""
Discovery Service
Layer-wise knockoff selection of the neurons that carry information about the response
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed

from config import N_JOBS
from exceptions import ConfigError, NeuceptError
from models.clustering import correlation_threshold_groups
from models.knockoff_stats import STATISTICS, compute_statistic, knockoff_threshold, minimum_discoveries, select
from models.knockoffs import DEFAULT_SHRINKAGE, build_knockoff_model, estimate_moments, sample_knockoffs, solve_equi_s
from preprocessing.trace_processor import ActivationTrace, standardize

logger = logging.getLogger(__name__)

DEFAULT_REPETITIONS = 50
DEFAULT_KEEP_FRACTION = 0.5
WIDE_LAYER = 128


@dataclass
class SelectionResult:
    """
    Outcome of discovery at one layer. frequency and w_mean use the layer's
    original neuron indexing; dropped (constant) neurons carry zeros.
    """
    layer_id: str
    q: float
    tau: float
    selected: List[int]
    frequency: np.ndarray
    taus: List[float] = field(default_factory=list)
    w_mean: Optional[np.ndarray] = None
    statistic: str = 'marginal_corr'
    repetitions: int = 1
    keep_fraction: float = DEFAULT_KEEP_FRACTION
    n_retained: int = 0
    dropped: List[int] = field(default_factory=list)
    groups: Optional[List[List[int]]] = None
    error: Optional[str] = None

    @property
    def width(self) -> int:
        return int(self.frequency.shape[0])

    def to_dict(self) -> dict:
        def finite_or_none(t):
            return None if math.isinf(t) else float(t)

        return {
            'layer_id': self.layer_id,
            'q': float(self.q),
            'tau': finite_or_none(self.tau),
            'taus': [finite_or_none(t) for t in self.taus],
            'selected': [int(j) for j in self.selected],
            'frequency': [float(f) for f in self.frequency],
            'w_mean': None if self.w_mean is None else [float(w) for w in self.w_mean],
            'statistic': self.statistic,
            'repetitions': int(self.repetitions),
            'keep_fraction': float(self.keep_fraction),
            'n_retained': int(self.n_retained),
            'dropped': [int(j) for j in self.dropped],
            'groups': self.groups,
            'error': self.error,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> 'SelectionResult':
        def as_tau(t):
            return math.inf if t is None else float(t)

        w_mean = payload.get('w_mean')
        return cls(
            layer_id=payload['layer_id'],
            q=float(payload['q']),
            tau=as_tau(payload.get('tau')),
            taus=[as_tau(t) for t in payload.get('taus', [])],
            selected=[int(j) for j in payload['selected']],
            frequency=np.asarray(payload['frequency'], dtype=np.float64),
            w_mean=None if w_mean is None else np.asarray(w_mean, dtype=np.float64),
            statistic=payload.get('statistic', 'marginal_corr'),
            repetitions=int(payload.get('repetitions', 1)),
            keep_fraction=float(payload.get('keep_fraction', DEFAULT_KEEP_FRACTION)),
            n_retained=int(payload.get('n_retained', 0)),
            dropped=[int(j) for j in payload.get('dropped', [])],
            groups=payload.get('groups'),
            error=payload.get('error'),
        )


def default_q(width: int) -> float:
    """Nominal FDR: 0.1 for narrow layers, 0.4 above WIDE_LAYER neurons"""
    return 0.1 if width <= WIDE_LAYER else 0.4


def q_from_precision(precision: float) -> float:
    if not 0.0 < precision < 1.0:
        raise ConfigError(f"precision must lie in (0, 1), got {precision}")
    return 1.0 - precision


def _resolve_q(trace: ActivationTrace, layer_ids: List[str], q_per_layer) -> Dict[str, float]:
    if q_per_layer is None or isinstance(q_per_layer, (int, float)):
        values = {lid: (default_q(trace.layer(lid).n_neurons) if q_per_layer is None else float(q_per_layer))
                  for lid in layer_ids}
    elif isinstance(q_per_layer, dict):
        values = {lid: float(q_per_layer.get(lid, default_q(trace.layer(lid).n_neurons))) for lid in layer_ids}
    else:
        q_list = list(q_per_layer)
        if len(q_list) != len(layer_ids):
            raise ConfigError(f"{len(q_list)} q values for {len(layer_ids)} layers")
        values = dict(zip(layer_ids, map(float, q_list)))
    for lid, q in values.items():
        if not 0.0 < q < 1.0:
            raise ConfigError(f"q for layer '{lid}' must lie in (0, 1), got {q}")
    return values


def _restandardize(x: np.ndarray) -> np.ndarray:
    std = x.std(axis=0, ddof=1)
    return (x - x.mean(axis=0)) / np.where(std > 0, std, 1.0)


def _one_repetition(model, x, y, stream, statistic, q, offset, statistic_params):
    x_tilde = sample_knockoffs(model, x, rng_seed=stream)
    stats = compute_statistic(statistic, x, x_tilde, y, **statistic_params)
    tau = knockoff_threshold(stats.w, q, offset=offset)
    return select(stats.w, tau), tau, stats.w


def _empty_result(layer_id, q, width, statistic, repetitions, keep_fraction, error=None, dropped=()):
    return SelectionResult(
        layer_id=layer_id,
        q=q,
        tau=math.inf,
        selected=[],
        frequency=np.zeros(width),
        taus=[],
        w_mean=np.zeros(width),
        statistic=statistic,
        repetitions=repetitions,
        keep_fraction=keep_fraction,
        dropped=list(dropped),
        error=error,
    )


def discover_layer(
    trace: ActivationTrace,
    layer_id: str,
    q: float,
    statistic: str = 'marginal_corr',
    repetitions: int = DEFAULT_REPETITIONS,
    keep_fraction: float = DEFAULT_KEEP_FRACTION,
    seed: int = 0,
    all_samples: bool = False,
    offset: int = 1,
    group_threshold: Optional[float] = None,
    shrinkage: float = DEFAULT_SHRINKAGE,
    statistic_params: Optional[dict] = None,
    n_jobs: int = N_JOBS,
) -> SelectionResult:
    """Standardize, fit the knockoff model, then repeat sample/score/threshold/select"""
    index = trace.layer_index(layer_id)
    layer = trace.layers[index]
    rows = trace.masked_rows(all_samples)
    view = standardize(layer, rows)
    y = np.asarray(trace.response, dtype=np.float64)[rows]
    width = layer.n_neurons
    if not view.retained:
        logger.info("layer '%s': every neuron is constant, nothing to select", layer_id)
        return _empty_result(layer_id, q, width, statistic, repetitions, keep_fraction, dropped=view.dropped)

    x = view.data
    positions = None
    if group_threshold is not None:
        positions = correlation_threshold_groups(x, group_threshold)
        x = _restandardize(np.column_stack([x[:, g].mean(axis=1) for g in positions]))
        logger.info("layer '%s': %d neurons in %d correlated groups", layer_id, view.data.shape[1], len(positions))

    floor = minimum_discoveries(q, offset)
    if x.shape[1] < floor:
        logger.warning("layer '%s': %d candidates cannot reach the %d discoveries q=%.2f needs (offset %d)",
                       layer_id, x.shape[1], floor, q, offset)

    moments = estimate_moments(x, alpha=shrinkage)
    model = build_knockoff_model(moments, solve_equi_s(moments.sigma))

    runs = Parallel(n_jobs=n_jobs)(
        delayed(_one_repetition)(
            model, x, y, [seed, index, rep], statistic, q, offset, statistic_params or {}
        )
        for rep in range(repetitions)
    )

    counts = np.zeros(x.shape[1])
    w_sum = np.zeros(x.shape[1])
    for chosen, _, w in runs:
        counts[chosen] += 1
        w_sum += w
    taus = [tau for _, tau, _ in runs]

    if positions is not None:
        member_counts = np.zeros(view.data.shape[1])
        member_w = np.zeros(view.data.shape[1])
        for g, members in enumerate(positions):
            member_counts[members] = counts[g]
            member_w[members] = w_sum[g]
        counts, w_sum = member_counts, member_w

    frequency = np.zeros(width)
    w_mean = np.zeros(width)
    frequency[view.retained] = counts / repetitions
    w_mean[view.retained] = w_sum / repetitions
    selected = np.flatnonzero(frequency >= keep_fraction).tolist()
    tau = float(np.median(taus))
    logger.info("layer '%s': selected %d of %d neurons (q=%.2f, median tau=%s)",
                layer_id, len(selected), width, q, tau)
    if not selected and floor > 1:
        logger.warning("layer '%s': empty selection; knockoff+ at q=%.2f reports nothing below %d neurons",
                       layer_id, q, floor)

    groups = None
    if positions is not None:
        groups = [view.to_original(g).tolist() for g in positions]
    return SelectionResult(
        layer_id=layer_id,
        q=q,
        tau=tau,
        selected=selected,
        frequency=frequency,
        taus=taus,
        w_mean=w_mean,
        statistic=statistic,
        repetitions=repetitions,
        keep_fraction=keep_fraction,
        n_retained=len(view.retained),
        dropped=view.dropped,
        groups=groups,
    )


def neucept_discover(
    trace: ActivationTrace,
    layer_ids: Optional[Sequence[str]] = None,
    q_per_layer: Union[None, float, Dict[str, float], Sequence[float]] = None,
    statistic: str = 'marginal_corr',
    repetitions: int = DEFAULT_REPETITIONS,
    keep_fraction: float = DEFAULT_KEEP_FRACTION,
    seed: int = 0,
    **options,
) -> List[SelectionResult]:
    """
    Run discovery independently at every listed layer (default: all but the last).
    A layer whose numerical steps fail is reported with its error and skipped.
    """
    if statistic not in STATISTICS:
        raise ConfigError(f"statistic must be one of {STATISTICS}, got '{statistic}'")
    if repetitions < 1:
        raise ConfigError(f"repetitions must be at least 1, got {repetitions}")
    if not 0.0 < keep_fraction <= 1.0:
        raise ConfigError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")

    layer_ids = list(trace.layer_ids[:-1] or trace.layer_ids) if layer_ids is None else list(layer_ids)
    for layer_id in layer_ids:
        trace.layer_index(layer_id)
    q_values = _resolve_q(trace, layer_ids, q_per_layer)

    results = []
    for layer_id in layer_ids:
        try:
            result = discover_layer(
                trace, layer_id, q_values[layer_id],
                statistic=statistic,
                repetitions=repetitions,
                keep_fraction=keep_fraction,
                seed=seed,
                **options,
            )
        except NeuceptError as exc:
            logger.warning("layer '%s' skipped: %s", layer_id, exc)
            result = _empty_result(
                layer_id, q_values[layer_id], trace.layer(layer_id).n_neurons,
                statistic, repetitions, keep_fraction, error=str(exc),
            )
        results.append(result)
    return results


def baseline_activation_select(trace: ActivationTrace, layer_id: str, k: int, all_samples: bool = False) -> List[int]:
    """Top-k neurons by mean activation over the masked samples, lower index first on ties"""
    layer = trace.layer(layer_id)
    if not 0 <= k <= layer.n_neurons:
        raise ConfigError(f"k={k} outside [0, {layer.n_neurons}] for layer '{layer_id}'")
    means = np.asarray(layer.data, dtype=np.float64)[trace.masked_rows(all_samples)].mean(axis=0)
    order = np.argsort(-means, kind='stable')
    return sorted(order[:k].tolist())


def top_neurons(result: SelectionResult, k: int) -> List[int]:
    """Rank by selection frequency, then mean statistic, then lower index"""
    w_mean = result.w_mean if result.w_mean is not None else np.zeros(result.width)
    order = np.lexsort((np.arange(result.width), -w_mean, -result.frequency))
    return order[:max(0, k)].tolist()


class DiscoveryService:
    """
    Service class for knockoff discovery runs
    """

    def __init__(
        self,
        statistic: str = 'marginal_corr',
        repetitions: int = DEFAULT_REPETITIONS,
        keep_fraction: float = DEFAULT_KEEP_FRACTION,
        offset: int = 1,
        group_threshold: Optional[float] = None,
        all_samples: bool = False,
        statistic_params: Optional[dict] = None,
        shrinkage: float = DEFAULT_SHRINKAGE,
        n_jobs: int = N_JOBS,
    ):
        self.statistic = statistic
        self.repetitions = repetitions
        self.keep_fraction = keep_fraction
        self.options = {
            'offset': offset,
            'group_threshold': group_threshold,
            'all_samples': all_samples,
            'statistic_params': statistic_params,
            'shrinkage': shrinkage,
            'n_jobs': n_jobs,
        }

    def discover(self, trace: ActivationTrace, layer_ids=None, q=None, seed: int = 0) -> List[SelectionResult]:
        return neucept_discover(
            trace, layer_ids, q,
            statistic=self.statistic,
            repetitions=self.repetitions,
            keep_fraction=self.keep_fraction,
            seed=seed,
            **self.options,
        )

    def selected_sets(self, trace: ActivationTrace, layer_ids=None, q=None, seed: int = 0) -> Dict[str, List[int]]:
        """Selected neurons per layer, skipped layers included as empty"""
        return {r.layer_id: r.selected for r in self.discover(trace, layer_ids, q, seed)}
