import numpy as np
import pytest
from scipy import linalg

from exceptions import DataError, NumericalError
from models.knockoffs import (
    MomentEstimate, build_knockoff_model, estimate_moments, joint_covariance, sample_knockoffs, solve_equi_s,
)


def _moments(sigma, mu=None):
    sigma = np.asarray(sigma, dtype=np.float64)
    mu = np.zeros(sigma.shape[0]) if mu is None else mu
    return MomentEstimate(mu=mu, sigma=sigma, shrinkage_alpha=0.0)


def test_sample_covariance_uses_n_minus_one():
    moments = estimate_moments([[0.0, 0.0], [2.0, 2.0]], alpha=0.0)
    assert np.allclose(moments.sample_cov, [[2.0, 2.0], [2.0, 2.0]])
    # singular at alpha=0, so shrinkage is raised one step
    assert moments.shrinkage_alpha == pytest.approx(0.1)
    assert linalg.eigvalsh(moments.sigma)[0] >= 1e-6


def test_full_shrinkage_gives_identity(rng):
    moments = estimate_moments(rng.standard_normal((30, 4)), alpha=1.0)
    assert np.array_equal(moments.sigma, np.eye(4))


def test_collinear_pair_eigenvalue_bound(rng):
    t = rng.standard_normal(40)
    t = (t - t.mean()) / t.std(ddof=1)
    moments = estimate_moments(np.column_stack([t, -t]), alpha=0.1)
    assert moments.shrinkage_alpha == pytest.approx(0.1)
    assert linalg.eigvalsh(moments.sigma)[0] >= 0.1 - 1e-12


def test_moment_input_validation():
    with pytest.raises(DataError, match="at least 2 rows"):
        estimate_moments([[1.0, 2.0]])
    with pytest.raises(DataError, match="shrinkage alpha"):
        estimate_moments(np.eye(3), alpha=1.5)


def test_equicorrelated_s_identity():
    assert np.array_equal(solve_equi_s(np.eye(3)), np.ones(3))


def test_equicorrelated_s_correlated_pair():
    s = solve_equi_s([[1.0, 0.75], [0.75, 1.0]])
    assert s == pytest.approx([0.5, 0.5], rel=1e-4)
    assert s[0] <= 0.5


def test_equicorrelated_s_rejects_indefinite():
    with pytest.raises(NumericalError, match="not positive definite"):
        solve_equi_s([[1.0, 2.0], [2.0, 1.0]])


def test_zero_s_gives_exact_copies(rng):
    model = build_knockoff_model(_moments(np.eye(3)), np.zeros(3))
    assert not model.cond_mean_mult.any()
    assert not model.cond_cov_chol.any()
    x = rng.standard_normal((20, 3))
    assert np.array_equal(sample_knockoffs(model, x, rng_seed=1), x)


def test_identity_knockoffs_are_independent_of_x(rng):
    model = build_knockoff_model(_moments(np.eye(3)), np.ones(3))
    assert np.allclose(model.cond_mean_mult, np.eye(3))
    x = rng.standard_normal((20000, 3))
    x_tilde = sample_knockoffs(model, x, rng_seed=[3, 0, 0])
    for j in range(3):
        assert abs(np.corrcoef(x[:, j], x_tilde[:, j])[0, 1]) < 0.03


def test_correlated_pair_model_is_finite():
    sigma = np.array([[1.0, 0.75], [0.75, 1.0]])
    s = solve_equi_s(sigma)
    model = build_knockoff_model(_moments(sigma), s)
    assert np.all(np.isfinite(model.cond_mean_mult))
    assert np.all(np.isfinite(model.cond_cov_chol))
    assert linalg.eigvalsh(joint_covariance(sigma, s))[0] >= -1e-9


def test_sampling_is_deterministic(rng):
    sigma = np.array([[1.0, 0.3], [0.3, 1.0]])
    model = build_knockoff_model(_moments(sigma), solve_equi_s(sigma))
    x = rng.standard_normal((50, 2))
    first = sample_knockoffs(model, x, rng_seed=[11, 2, 5])
    assert np.array_equal(first, sample_knockoffs(model, x, rng_seed=[11, 2, 5]))
    assert not np.array_equal(first, sample_knockoffs(model, x, rng_seed=[11, 2, 6]))


def test_block_sampling_is_deterministic(rng):
    model = build_knockoff_model(_moments(np.eye(2)), np.ones(2))
    x = rng.standard_normal((25, 2))
    first = sample_knockoffs(model, x, rng_seed=4, block_size=10)
    assert first.shape == (25, 2)
    assert np.array_equal(first, sample_knockoffs(model, x, rng_seed=4, block_size=10))


def test_sampling_shape_mismatch(rng):
    model = build_knockoff_model(_moments(np.eye(2)), np.ones(2))
    with pytest.raises(DataError):
        sample_knockoffs(model, rng.standard_normal((5, 3)), rng_seed=0)


def test_build_rejects_wrong_length_s():
    with pytest.raises(DataError, match="expected 3"):
        build_knockoff_model(_moments(np.eye(3)), np.ones(2))


def test_model_debug_dump():
    dump = build_knockoff_model(_moments(np.eye(2)), np.ones(2)).to_dict()
    assert dump['s'] == [1.0, 1.0]
    assert dump['sigma'] == [[1.0, 0.0], [0.0, 1.0]]


def test_knockoff_draws_match_the_joint_covariance(rng):
    sigma = np.array([[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]])
    n = 20000
    x = rng.multivariate_normal(np.zeros(3), sigma, size=n)
    s = solve_equi_s(sigma)
    x_tilde = sample_knockoffs(build_knockoff_model(_moments(sigma), s), x, rng_seed=11)

    joint = np.cov(np.hstack([x, x_tilde]), rowvar=False)
    tolerance = 5 / np.sqrt(n)
    assert np.allclose(joint[3:, 3:], sigma, rtol=0, atol=tolerance)
    assert np.allclose(joint[:3, 3:], sigma - np.diag(s), rtol=0, atol=tolerance)
