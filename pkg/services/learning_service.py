"""
Learning Service
Compress the discovered critical neurons and cluster samples into mechanisms
"""
import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from config import N_JOBS
from exceptions import ConfigError, DataError
from models.clustering import METHODS, MechanismAssignment, RepresentativeSet, cluster_samples, feature_agglomerate
from preprocessing.trace_processor import ActivationTrace
from services.discovery_service import SelectionResult, top_neurons

logger = logging.getLogger(__name__)

PerLayer = Union[None, int, Dict[str, int]]


def _per_layer(value: PerLayer, layer_id: str) -> Optional[int]:
    if value is None or isinstance(value, int):
        return value
    return value.get(layer_id)


def critical_representatives(
    trace: ActivationTrace,
    selections: Sequence[SelectionResult],
    limits: PerLayer = None,
    top_k: PerLayer = None,
    all_samples: bool = False,
) -> Tuple[np.ndarray, List[RepresentativeSet]]:
    """
    Per-layer critical activations, optionally reduced to the top-k ranked neurons
    and/or agglomerated to at most limits[layer] representatives, concatenated across layers.
    """
    rows = trace.masked_rows(all_samples)
    blocks, reps = [], []
    for result in selections:
        k_layer = _per_layer(top_k, result.layer_id)
        neurons = sorted(top_neurons(result, k_layer)) if k_layer is not None else list(result.selected)
        if not neurons:
            logger.info("layer '%s': no critical neurons", result.layer_id)
            continue
        x = np.asarray(trace.layer(result.layer_id).data, dtype=np.float64)[rows][:, neurons]
        limit = _per_layer(limits, result.layer_id)
        if limit is not None:
            rep = feature_agglomerate(x, limit, neuron_indices=neurons, layer_id=result.layer_id)
        else:
            rep = RepresentativeSet(layer_id=result.layer_id, groups=[[j] for j in neurons], v=x)
        blocks.append(rep.v)
        reps.append(rep)
    if not blocks:
        raise DataError("empty critical set at every layer")
    return np.hstack(blocks), reps


def neucept_learn(
    trace: ActivationTrace,
    selections: Sequence[SelectionResult],
    limits: PerLayer = None,
    k: int = 2,
    method: str = 'kmeans',
    seed: int = 0,
    top_k: PerLayer = None,
    all_samples: bool = False,
    **params,
) -> MechanismAssignment:
    """Agglomerate (when limits are given), concatenate representatives, cluster by method"""
    if not selections:
        raise DataError("no selection results to learn from")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got '{method}'")
    v, reps = critical_representatives(trace, selections, limits, top_k, all_samples)
    assignment = cluster_samples(v, k, method, seed=seed, **params)
    logger.info("%s with k=%d on %d representatives: sizes %s",
                method, k, v.shape[1], assignment.cluster_sizes().tolist())
    return replace(assignment, representatives=reps)


class LearningService:
    """
    Service class for mechanism learning
    """

    def __init__(
        self,
        method: str = 'kmeans',
        limits: PerLayer = None,
        top_k: PerLayer = None,
        all_samples: bool = False,
        n_jobs: int = N_JOBS,
        **params,
    ):
        self.method = method
        self.limits = limits
        self.top_k = top_k
        self.all_samples = all_samples
        self.n_jobs = n_jobs
        self.params = params

    def learn(self, trace: ActivationTrace, selections, k: int, seed: int = 0) -> MechanismAssignment:
        return neucept_learn(
            trace, selections, self.limits, k, self.method, seed,
            top_k=self.top_k, all_samples=self.all_samples, **self.params,
        )

    def sweep(self, trace: ActivationTrace, selections, k_values: Sequence[int], seed: int = 0) -> List[MechanismAssignment]:
        """One assignment per k on the shared representative matrix, in k order"""
        v, reps = critical_representatives(trace, selections, self.limits, self.top_k, self.all_samples)
        runs = Parallel(n_jobs=self.n_jobs)(
            delayed(cluster_samples)(v, k, self.method, seed=seed, **self.params) for k in k_values
        )
        return [replace(run, representatives=reps) for run in runs]
