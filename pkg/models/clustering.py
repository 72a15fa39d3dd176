"""
Clustering Models Module
Feature agglomeration of critical neurons and the sample-level mechanism learners
(k-means, diagonal Gaussian mixture, Ward agglomerative)
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import AgglomerativeClustering, kmeans_plusplus
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import GaussianMixture

from exceptions import DataError, NumericalError

logger = logging.getLogger(__name__)

METHODS = ('kmeans', 'gmm', 'agglomerative')

KMEANS_MAX_ITER = 300
KMEANS_N_INIT = 4
GMM_MAX_ITER = 200
GMM_REG = 1e-6
GMM_TOL = 1e-9


@dataclass(frozen=True)
class RepresentativeSet:
    """
    Compressed view of one layer's critical neurons.
    groups hold original neuron indices; column j of v is the mean of group j's columns.
    """
    layer_id: str
    groups: List[List[int]]
    v: np.ndarray
    limit: Optional[int] = None

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def to_dict(self) -> dict:
        return {
            'layer_id': self.layer_id,
            'limit': self.limit,
            'groups': [list(map(int, g)) for g in self.groups],
        }


@dataclass(frozen=True)
class MechanismAssignment:
    c: np.ndarray
    e: np.ndarray
    k: int
    method: str
    fit_score: float
    history: List[float] = field(default_factory=list)
    converged: bool = True
    centers: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None
    representatives: List[RepresentativeSet] = field(default_factory=list)

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.c, minlength=self.k)


def _check_samples(v, k: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
        raise DataError(f"expected a non-empty samples x features matrix, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DataError("non-finite value in clustering input")
    if k < 1:
        raise DataError(f"k must be at least 1, got {k}")
    if k > v.shape[0]:
        raise DataError(f"k={k} exceeds sample count {v.shape[0]}")
    return v


def canonical_order(labels: np.ndarray, k: int) -> np.ndarray:
    """
    Old-label order such that relabelling by it numbers clusters by first appearance.
    Labels that never occur keep their relative order at the end.
    """
    _, first = np.unique(labels, return_index=True)
    seen = np.unique(labels)[np.argsort(first)]
    unseen = np.setdiff1d(np.arange(k), seen)
    return np.concatenate([seen, unseen]).astype(np.int64)


def _relabel(labels: np.ndarray, order: np.ndarray) -> np.ndarray:
    mapping = np.empty_like(order)
    mapping[order] = np.arange(order.size)
    return mapping[labels]


# ---------------------------------------------------------------------------
# Feature agglomeration
# ---------------------------------------------------------------------------

def correlation_distance(x: np.ndarray) -> np.ndarray:
    """1 - |corr| between columns; constant columns sit at distance 1 from everything"""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(invalid='ignore', divide='ignore'):
        corr = np.atleast_2d(np.corrcoef(x, rowvar=False))
    corr = np.nan_to_num(corr, nan=0.0)
    dist = np.clip(1.0 - np.abs(corr), 0.0, 1.0)
    np.fill_diagonal(dist, 0.0)
    return 0.5 * (dist + dist.T)


def correlation_groups(x: np.ndarray, n_groups: int) -> List[List[int]]:
    """Average-linkage cut of the columns into n_groups groups (column positions)"""
    p = x.shape[1]
    if n_groups >= p:
        return [[j] for j in range(p)]
    if n_groups <= 1:
        return [list(range(p))]
    model = AgglomerativeClustering(n_clusters=n_groups, metric='precomputed', linkage='average')
    labels = model.fit_predict(correlation_distance(x))
    return [np.flatnonzero(labels == g).tolist() for g in canonical_order(labels, n_groups)]


def correlation_threshold_groups(x: np.ndarray, threshold: float) -> List[List[int]]:
    """Average-linkage groups of columns whose linkage |corr| stays at or above threshold"""
    p = x.shape[1]
    if p < 2:
        return [[j] for j in range(p)]
    if not 0.0 < threshold <= 1.0:
        raise DataError(f"group threshold must lie in (0, 1], got {threshold}")
    model = AgglomerativeClustering(
        n_clusters=None,
        metric='precomputed',
        linkage='average',
        distance_threshold=1.0 - threshold + 1e-12,
        compute_full_tree=True,
    )
    labels = model.fit_predict(correlation_distance(x))
    k = int(labels.max()) + 1
    return [np.flatnonzero(labels == g).tolist() for g in canonical_order(labels, k)]


def feature_agglomerate(
    x,
    max_reps: int,
    neuron_indices: Optional[Sequence[int]] = None,
    layer_id: str = "",
) -> RepresentativeSet:
    """
    Group the critical columns of x under d(i, j) = 1 - |corr(x_i, x_j)| and
    represent each group by its unweighted mean column.
    neuron_indices maps columns of x to original neuron indices.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise DataError(f"layer '{layer_id}': no critical columns to agglomerate")
    if max_reps < 1:
        raise DataError(f"max_reps must be at least 1, got {max_reps}")
    p = x.shape[1]
    indices = np.arange(p) if neuron_indices is None else np.asarray(neuron_indices, dtype=np.int64)
    if indices.shape != (p,):
        raise DataError(f"{indices.size} neuron indices for {p} columns")

    n_groups = min(max_reps, p)
    positions = correlation_groups(x, n_groups)
    v = np.column_stack([x[:, group].mean(axis=1) for group in positions])
    groups = [indices[group].tolist() for group in positions]
    logger.debug("layer '%s': %d critical neurons -> %d representatives", layer_id, p, len(groups))
    return RepresentativeSet(layer_id=layer_id, groups=groups, v=v, limit=max_reps)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

def derived_seed(*parts: int) -> int:
    """32-bit seed from an integer stream key (for APIs that take legacy seeds)"""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _lloyd(v: np.ndarray, centers: np.ndarray, max_iter: int):
    k = centers.shape[0]
    labels = None
    history = []
    converged = False
    for _ in range(max(1, max_iter)):
        sq = cdist(v, centers, 'sqeuclidean')
        new_labels = np.argmin(sq, axis=1)
        history.append(float(sq[np.arange(v.shape[0]), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
        centers = centers.copy()
        for j in range(k):
            members = labels == j
            # Empty clusters keep their previous center
            if members.any():
                centers[j] = v[members].mean(axis=0)
    if not converged:
        # Labels must match the returned centers
        sq = cdist(v, centers, 'sqeuclidean')
        new_labels = np.argmin(sq, axis=1)
        history.append(float(sq[np.arange(v.shape[0]), new_labels].sum()))
    return new_labels, centers, history, converged


def kmeans(
    v,
    k: int,
    seed: int = 0,
    max_iter: int = KMEANS_MAX_ITER,
    n_init: int = KMEANS_N_INIT,
) -> MechanismAssignment:
    """
    k-means++ seeding followed by Lloyd iterations until the assignment is a fixpoint.
    n_init restarts draw from streams (seed, restart); the lowest inertia wins, first on ties.
    e holds each sample's Euclidean distance to every center.
    """
    v = _check_samples(v, k)
    best = None
    for run in range(max(1, n_init)):
        init, _ = kmeans_plusplus(v, n_clusters=k, random_state=derived_seed(seed, run))
        labels, centers, history, converged = _lloyd(v, init, max_iter)
        if best is None or history[-1] < best[2][-1]:
            best = (labels, centers, history, converged)

    labels, centers, history, converged = best
    if not converged:
        logger.warning("k-means reached max_iter=%d before the assignment settled (k=%d)", max_iter, k)
    order = canonical_order(labels, k)
    labels = _relabel(labels, order)
    centers = centers[order]
    e = np.sqrt(cdist(v, centers, 'sqeuclidean'))
    return MechanismAssignment(
        c=labels.astype(np.int64),
        e=e,
        k=k,
        method='kmeans',
        fit_score=history[-1],
        history=history,
        converged=converged,
        centers=centers,
    )


# ---------------------------------------------------------------------------
# Gaussian mixture
# ---------------------------------------------------------------------------

def _init_from_kmeans(v: np.ndarray, start: MechanismAssignment, reg: float):
    n = v.shape[0]
    k = start.k
    sizes = start.cluster_sizes()
    weights = sizes / n
    global_var = v.var(axis=0)
    global_var = np.where(global_var > 0, global_var, 1.0)
    variances = np.empty((k, v.shape[1]))
    for j in range(k):
        members = v[start.c == j]
        var = members.var(axis=0) if members.shape[0] > 1 else global_var
        variances[j] = np.where(var > 0, var, global_var) + reg
    return weights, start.centers, variances


def gmm_em(
    v,
    k: int,
    seed: int = 0,
    max_iter: int = GMM_MAX_ITER,
    reg: float = GMM_REG,
    tol: float = GMM_TOL,
) -> MechanismAssignment:
    """
    Diagonal-covariance EM started from a k-means run.
    Each step is one warm-started sklearn iteration so the total log-likelihood
    can be recorded after every M-step; reg is added to every variance.
    """
    v = _check_samples(v, k)
    if reg < 0:
        raise DataError(f"reg must be nonnegative, got {reg}")
    start = kmeans(v, k, seed=seed)
    weights, means, variances = _init_from_kmeans(v, start, reg)

    model = GaussianMixture(
        n_components=k,
        covariance_type='diag',
        reg_covar=reg,
        max_iter=1,
        tol=0.0,
        warm_start=True,
        init_params='random_from_data',
        weights_init=weights,
        means_init=means,
        precisions_init=1.0 / variances,
        random_state=derived_seed(seed),
    )

    n = v.shape[0]
    history = []
    converged = False
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', ConvergenceWarning)
        for _ in range(max(1, max_iter)):
            try:
                model.fit(v)
            except (ValueError, FloatingPointError) as exc:
                raise NumericalError(f"gmm EM step failed: {exc}") from exc
            log_likelihood = float(model.score(v) * n)
            if not np.isfinite(log_likelihood):
                raise NumericalError("degenerate likelihood in gmm EM")
            history.append(log_likelihood)
            if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * max(1.0, abs(history[-1])):
                converged = True
                break

    if not converged:
        logger.warning("gmm EM reached max_iter=%d (k=%d)", max_iter, k)
    resp = model.predict_proba(v)
    if np.isnan(resp).all():
        raise NumericalError("all responsibilities are NaN")
    labels = np.argmax(resp, axis=1)
    order = canonical_order(labels, k)
    return MechanismAssignment(
        c=_relabel(labels, order).astype(np.int64),
        e=resp[:, order],
        k=k,
        method='gmm',
        fit_score=history[-1],
        history=history,
        converged=converged,
        centers=model.means_[order],
        variances=model.covariances_[order],
    )


# ---------------------------------------------------------------------------
# Agglomerative
# ---------------------------------------------------------------------------

def agglomerative_cluster(v, k: int) -> MechanismAssignment:
    """Ward-linkage merging to k clusters; e is the one-hot label matrix"""
    v = _check_samples(v, k)
    n = v.shape[0]
    if k == n:
        labels = np.arange(n)
    elif k == 1:
        labels = np.zeros(n, dtype=np.int64)
    else:
        labels = AgglomerativeClustering(n_clusters=k, linkage='ward').fit_predict(v)
        labels = _relabel(labels, canonical_order(labels, k))

    centers = np.vstack([v[labels == j].mean(axis=0) for j in range(k)])
    within = float(np.sum((v - centers[labels]) ** 2))
    return MechanismAssignment(
        c=labels.astype(np.int64),
        e=np.eye(k)[labels],
        k=k,
        method='agglomerative',
        fit_score=within,
        centers=centers,
    )


def cluster_samples(v, k: int, method: str, seed: int = 0, **params) -> MechanismAssignment:
    if method == 'kmeans':
        return kmeans(v, k, seed=seed, **params)
    if method == 'gmm':
        return gmm_em(v, k, seed=seed, **params)
    if method == 'agglomerative':
        return agglomerative_cluster(v, k)
    raise DataError(f"unknown clustering method '{method}' (expected one of {METHODS})")
