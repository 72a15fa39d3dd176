"""
Knockoff statistics and the data-dependent threshold
W_j = U_j - U~_j, tau_q and the selection rule {j : W_j >= tau_q}
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import Lasso

from exceptions import DataError

logger = logging.getLogger(__name__)

STATISTICS = ('marginal_corr', 'lasso_cd')

LASSO_LAMBDA_RATIO = 0.25
LASSO_MAX_ITER = 1000
LASSO_TOL = 1e-7


@dataclass(frozen=True)
class KnockoffStatistics:
    w: np.ndarray
    method: str
    u: np.ndarray
    u_tilde: np.ndarray
    converged: bool = True


def _check_inputs(x, x_tilde, y):
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != x_tilde.shape:
        raise DataError(f"x {x.shape} and knockoffs {x_tilde.shape} differ in shape")
    if x.shape[0] != y.shape[0]:
        raise DataError(f"x has {x.shape[0]} rows, y has {y.shape[0]}")
    y = y - y.mean()
    if not np.any(y):
        raise DataError("response y has zero variance")
    return x, x_tilde, y


def _abs_corr(columns: np.ndarray, y_centered: np.ndarray) -> np.ndarray:
    # Column-wise reductions only, so each entry depends on its own column alone
    centered = columns - columns.mean(axis=0)
    cov = np.sum(centered * y_centered[:, None], axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0)) * np.sqrt(np.sum(y_centered * y_centered))
    with np.errstate(invalid='ignore', divide='ignore'):
        corr = np.where(norms > 0, cov / norms, 0.0)
    return np.abs(corr)


def statistic_marginal(x, x_tilde, y) -> KnockoffStatistics:
    """U_j = |corr(x_j, y)|, U~_j = |corr(x~_j, y)|"""
    x, x_tilde, y = _check_inputs(x, x_tilde, y)
    u = _abs_corr(x, y)
    u_tilde = _abs_corr(x_tilde, y)
    return KnockoffStatistics(w=u - u_tilde, method='marginal_corr', u=u, u_tilde=u_tilde)


def lambda_max(design: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which the lasso solution is identically zero"""
    return float(np.max(np.abs(design.T @ y)) / design.shape[0])


def fit_lasso(
    design: np.ndarray,
    y: np.ndarray,
    lam: float,
    max_iter: int = LASSO_MAX_ITER,
    tol: float = LASSO_TOL,
):
    """
    Cyclic coordinate-descent lasso of y on design (no intercept),
    objective ||y - X b||^2 / (2n) + lam |b|_1.
    Returns (coefficients, converged).
    """
    if lam >= lambda_max(design, y):
        return np.zeros(design.shape[1]), True

    model = Lasso(alpha=lam, fit_intercept=False, max_iter=max_iter, tol=tol, selection='cyclic')
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', ConvergenceWarning)
        model.fit(design, y)
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    if not converged:
        logger.warning("lasso did not converge in %d sweeps (lambda=%.4g); using last iterate", max_iter, lam)
    return np.ravel(model.coef_), converged


def statistic_lasso(
    x,
    x_tilde,
    y,
    lam: Optional[float] = None,
    lambda_ratio: float = LASSO_LAMBDA_RATIO,
    max_iter: int = LASSO_MAX_ITER,
    tol: float = LASSO_TOL,
) -> KnockoffStatistics:
    """
    Lasso coefficient difference on the augmented design [x, x~].
    Default penalty is lambda_ratio * lambda_max of the augmented design.
    """
    x, x_tilde, y = _check_inputs(x, x_tilde, y)
    p = x.shape[1]
    design = np.column_stack([x, x_tilde])
    if lam is None:
        lam = lambda_ratio * lambda_max(design, y)
    coef, converged = fit_lasso(design, y, lam, max_iter=max_iter, tol=tol)
    u = np.abs(coef[:p])
    u_tilde = np.abs(coef[p:])
    return KnockoffStatistics(w=u - u_tilde, method='lasso_cd', u=u, u_tilde=u_tilde, converged=converged)


def compute_statistic(method: str, x, x_tilde, y, **params) -> KnockoffStatistics:
    if method == 'marginal_corr':
        return statistic_marginal(x, x_tilde, y)
    if method == 'lasso_cd':
        return statistic_lasso(x, x_tilde, y, **params)
    raise DataError(f"unknown statistic '{method}' (expected one of {STATISTICS})")


def knockoff_threshold(w, q: float, offset: int = 1) -> float:
    """
    tau_q = min{t > 0 : (offset + #{W_j <= -t}) / #{W_j >= t} <= q}
    over candidates t in {|W_j| : W_j != 0}; +inf when no candidate qualifies.
    offset=1 is knockoff+, offset=0 the plain knockoff filter.
    """
    if not 0.0 < q < 1.0:
        raise DataError(f"q must lie in (0, 1), got {q}")
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    candidates = np.unique(np.abs(w[w != 0]))
    for t in candidates:
        false_estimate = offset + np.count_nonzero(w <= -t)
        discoveries = max(1, np.count_nonzero(w >= t))
        if false_estimate / discoveries <= q:
            return float(t)
    return float('inf')


def minimum_discoveries(q: float, offset: int = 1) -> int:
    """Smallest non-empty selection the filter can report: ceil(offset / q), at least 1"""
    if not 0.0 < q < 1.0:
        raise DataError(f"q must lie in (0, 1), got {q}")
    return max(1, math.ceil(offset / q - 1e-9))


def select(w, tau: float) -> np.ndarray:
    """Indices {j : W_j >= tau}"""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if np.isinf(tau):
        return np.array([], dtype=np.int64)
    return np.flatnonzero(w >= tau)
