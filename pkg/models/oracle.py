"""
Brute-force reference for small discrete instances:
plug-in mutual information and exhaustive search for the most informative subset
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence, Tuple

import numpy as np
from sklearn.metrics import mutual_info_score

from exceptions import DataError

logger = logging.getLogger(__name__)

MAX_VARIABLES = 20
MAX_ALPHABET = 16
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DiscreteTable:
    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        try:
            z = np.asarray(self.z, dtype=np.float64)
            y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        except (TypeError, ValueError) as exc:
            raise DataError(f"table must hold integer codes ({exc})") from exc
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2 or z.shape[0] != y.shape[0]:
            raise DataError(f"table z has shape {z.shape}, y has {y.shape[0]} entries")
        for name, values in (('z', z), ('y', y)):
            if values.size and not np.all(np.mod(values, 1) == 0):
                raise DataError(f"{name} must hold integer codes")
        z = z.astype(np.int64)
        y = y.astype(np.int64)
        if z.shape[1] > MAX_VARIABLES:
            raise DataError(f"bound exceeded: {z.shape[1]} variables (max {MAX_VARIABLES})")
        widest = max([np.unique(z[:, j]).size for j in range(z.shape[1])] + [np.unique(y).size])
        if widest > MAX_ALPHABET:
            raise DataError(f"bound exceeded: alphabet of size {widest} (max {MAX_ALPHABET})")
        object.__setattr__(self, 'z', z)
        object.__setattr__(self, 'y', y)

    @property
    def n_variables(self) -> int:
        return self.z.shape[1]


def joint_codes(columns) -> np.ndarray:
    """One integer code per distinct row of the given columns"""
    columns = np.asarray(columns)
    if columns.ndim == 1:
        columns = columns[:, None]
    if columns.shape[1] == 0:
        return np.zeros(columns.shape[0], dtype=np.int64)
    _, codes = np.unique(columns, axis=0, return_inverse=True)
    return codes.reshape(-1)


def empirical_mi(z_subset, y) -> float:
    """Plug-in I(Z_S; Y) in bits from empirical joint counts"""
    y = np.asarray(y).reshape(-1)
    codes = joint_codes(z_subset)
    if codes.shape[0] != y.shape[0]:
        raise DataError(f"{codes.shape[0]} rows of z for {y.shape[0]} labels")
    return float(mutual_info_score(y, codes) / np.log(2))


def discrete_cni(table: DiscreteTable, k: int) -> Tuple[Tuple[int, ...], float]:
    """
    argmax of I(Z_S; Y) over all subsets with |S| <= k, by exhaustive enumeration.
    Ties within 1e-12 bits go to the lexicographically smallest subset.
    """
    if k < 0:
        raise DataError(f"k must be nonnegative, got {k}")
    k = min(k, table.n_variables)
    best_subset: Tuple[int, ...] = ()
    best_mi = 0.0
    for size in range(1, k + 1):
        for subset in combinations(range(table.n_variables), size):
            mi = empirical_mi(table.z[:, subset], table.y)
            if mi > best_mi + TIE_TOLERANCE or (abs(mi - best_mi) <= TIE_TOLERANCE and subset < best_subset):
                best_subset, best_mi = subset, mi
    return best_subset, best_mi


def binarize_at_median(x) -> np.ndarray:
    """1 where a value lies strictly above its column median, else 0"""
    x = np.asarray(x, dtype=np.float64)
    return (x > np.median(x, axis=0)).astype(np.int64)


def selection_mi_ratio(table: DiscreteTable, selected: Sequence[int]) -> Tuple[float, float, float]:
    """
    (ratio, selected MI, exhaustive optimum MI) at the cardinality of the selection.
    An empty optimum counts as ratio 1.
    """
    selected = sorted(int(j) for j in selected)
    selected_mi = empirical_mi(table.z[:, selected], table.y) if selected else 0.0
    _, optimum = discrete_cni(table, len(selected))
    ratio = 1.0 if optimum <= TIE_TOLERANCE else selected_mi / optimum
    logger.debug("selection MI %.4f of optimum %.4f at |S|=%d", selected_mi, optimum, len(selected))
    return ratio, selected_mi, optimum
