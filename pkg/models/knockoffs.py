"""
Second-order (Gaussian) Model-X knockoffs
Moment estimation with shrinkage, equicorrelated s, conditional sampling
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from exceptions import DataError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_SHRINKAGE = 0.1
SHRINKAGE_STEP = 0.1
MIN_EIGENVALUE = 1e-6
PSD_EPSILON = 1e-6


@dataclass(frozen=True)
class MomentEstimate:
    mu: np.ndarray
    sigma: np.ndarray
    shrinkage_alpha: float
    sample_cov: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class KnockoffModel:
    """Conditional law of X~ given X: Normal(x - M (x - mu), C C^T)"""
    moments: MomentEstimate
    s: np.ndarray
    cond_mean_mult: np.ndarray
    cond_cov_chol: np.ndarray

    @property
    def dimension(self) -> int:
        return self.s.shape[0]

    def to_dict(self) -> dict:
        return {
            'mu': self.moments.mu.tolist(),
            'sigma': self.moments.sigma.tolist(),
            'shrinkage_alpha': self.moments.shrinkage_alpha,
            's': self.s.tolist(),
        }


def estimate_moments(x: np.ndarray, alpha: float = DEFAULT_SHRINKAGE) -> MomentEstimate:
    """
    Column means and the shrunk covariance (1 - alpha) S + alpha I,
    S with the n-1 denominator. alpha is raised in steps of 0.1 until the
    smallest eigenvalue reaches MIN_EIGENVALUE.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got {x.ndim}-D")
    if x.shape[0] < 2:
        raise DataError("moment estimation needs at least 2 rows")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite input to moment estimation")
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"shrinkage alpha must lie in [0, 1], got {alpha}")

    p = x.shape[1]
    mu = x.mean(axis=0)
    sample_cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    identity = np.eye(p)

    requested = alpha
    while True:
        sigma = (1.0 - alpha) * sample_cov + alpha * identity
        sigma = 0.5 * (sigma + sigma.T)
        min_eig = linalg.eigvalsh(sigma)[0]
        if min_eig >= MIN_EIGENVALUE or alpha >= 1.0:
            break
        alpha = min(1.0, round(alpha + SHRINKAGE_STEP, 10))

    if alpha != requested:
        logger.info("shrinkage raised from %.2f to %.2f (min eigenvalue %.3g)", requested, alpha, min_eig)
    return MomentEstimate(mu=mu, sigma=sigma, shrinkage_alpha=alpha, sample_cov=sample_cov)


def _conditional_cov(sigma: np.ndarray, s: np.ndarray) -> np.ndarray:
    d = np.diag(s)
    d_sigma_inv_d = d @ linalg.solve(sigma, d, assume_a='pos')
    cond = 2.0 * d - d_sigma_inv_d
    return 0.5 * (cond + cond.T)


def joint_covariance(sigma: np.ndarray, s: np.ndarray) -> np.ndarray:
    """[[Sigma, Sigma - D], [Sigma - D, Sigma]]"""
    off = sigma - np.diag(s)
    return np.block([[sigma, off], [off, sigma]])


def solve_equi_s(sigma: np.ndarray) -> np.ndarray:
    """Equicorrelated knockoff diagonal s_j = min(2 lambda_min, 1)"""
    sigma = np.asarray(sigma, dtype=np.float64)
    eigenvalues = linalg.eigvalsh(sigma)
    lambda_min = eigenvalues[0]
    if lambda_min <= 0:
        raise NumericalError(f"covariance is not positive definite (min eigenvalue {lambda_min:.3g})")
    if not np.allclose(np.diag(sigma), 1.0, atol=1e-8):
        logger.warning("solve_equi_s expects a unit-diagonal covariance")

    s = np.full(sigma.shape[0], min(2.0 * lambda_min, 1.0))
    # The conditional covariance must admit a Cholesky factor
    for _ in range(50):
        cond_min = linalg.eigvalsh(_conditional_cov(sigma, s))[0]
        if cond_min > 1e-10 * s.max():
            break
        s = s * (1.0 - PSD_EPSILON)
    else:
        raise NumericalError("could not scale s to a positive definite conditional covariance")

    if s[0] != min(2.0 * lambda_min, 1.0):
        logger.debug("equicorrelated s rescaled to %.12g", s[0])
    return s


def build_knockoff_model(moments: MomentEstimate, s: np.ndarray) -> KnockoffModel:
    """Precompute diag(s) Sigma^-1 and the Cholesky factor of the conditional covariance"""
    s = np.asarray(s, dtype=np.float64)
    sigma = moments.sigma
    p = moments.dimension
    if s.shape != (p,):
        raise DataError(f"s has length {s.size}, expected {p}")
    if np.any(s < 0):
        raise NumericalError("knockoff diagonal s must be nonnegative")

    if not np.any(s):
        zeros = np.zeros((p, p))
        return KnockoffModel(moments=moments, s=s, cond_mean_mult=zeros, cond_cov_chol=zeros.copy())

    try:
        sigma_factor = linalg.cho_factor(sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"covariance Cholesky failed: {exc}") from exc
    sigma_inv = linalg.cho_solve(sigma_factor, np.eye(p))
    cond_mean_mult = np.diag(s) @ sigma_inv
    cond_cov = _conditional_cov(sigma, s)
    try:
        chol = linalg.cholesky(cond_cov, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"conditional covariance is not positive definite: {exc}") from exc
    return KnockoffModel(moments=moments, s=s, cond_mean_mult=cond_mean_mult, cond_cov_chol=chol)


def sample_knockoffs(
    model: KnockoffModel,
    x: np.ndarray,
    rng_seed,
    block_size: Optional[int] = None,
) -> np.ndarray:
    """
    Draw one knockoff row per row of x. Deterministic given rng_seed; with
    block_size the rows are drawn block by block from streams (rng_seed, block).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dimension:
        raise DataError(f"x has shape {x.shape}, model dimension is {model.dimension}")
    if not np.any(model.s):
        return x.copy()

    centered = x - model.moments.mu
    mean = x - centered @ model.cond_mean_mult.T

    n, p = x.shape
    if block_size is None:
        noise = np.random.default_rng(rng_seed).standard_normal((n, p))
    else:
        base = [int(v) for v in np.atleast_1d(rng_seed)]
        blocks = []
        for block, start in enumerate(range(0, n, block_size)):
            rows = min(block_size, n - start)
            blocks.append(np.random.default_rng(base + [block]).standard_normal((rows, p)))
        noise = np.vstack(blocks)
    return mean + noise @ model.cond_cov_chol.T
