import logging
import math

import numpy as np
import pytest

from exceptions import ConfigError, TraceError
from models.knockoff_stats import compute_statistic, knockoff_threshold, select
from models.knockoffs import build_knockoff_model, estimate_moments, sample_knockoffs, solve_equi_s
from models.synthetic_network import linear_gaussian_design
from preprocessing.trace_processor import ActivationTrace, LayerMatrix, standardize
from services.discovery_service import (
    DiscoveryService, SelectionResult, baseline_activation_select, default_q, discover_layer,
    neucept_discover, q_from_precision, top_neurons,
)
from services.evaluation_service import false_discovery_proportion, power
from services.synthesis_service import linear_trace


def _driven_trace(seed, n=300, p=10, extra=None):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    if extra is not None:
        x = extra(x, rng)
    return ActivationTrace(layers=(LayerMatrix('h', x),), response=x[:, 0].astype(np.float32))


def test_single_driver_is_selected():
    hits = 0
    for seed in range(10):
        result = neucept_discover(_driven_trace(seed), q_per_layer=0.2, repetitions=5, seed=seed, offset=0)[0]
        hits += int(0 in result.selected)
    assert hits >= 9


def test_one_repetition_matches_a_single_run():
    trace = _driven_trace(3)
    result = discover_layer(trace, 'h', q=0.2, repetitions=1, keep_fraction=1.0, seed=5, offset=0)

    view = standardize(trace.layer('h'), trace.masked_rows())
    moments = estimate_moments(view.data)
    model = build_knockoff_model(moments, solve_equi_s(moments.sigma))
    x_tilde = sample_knockoffs(model, view.data, rng_seed=[5, 0, 0])
    w = compute_statistic('marginal_corr', view.data, x_tilde, trace.response).w
    tau = knockoff_threshold(w, 0.2, offset=0)

    assert result.selected == view.to_original(select(w, tau)).tolist()
    assert result.tau == tau
    assert result.taus == [tau]


def test_constant_neurons_are_never_selected():
    def with_constant(x, rng):
        x = x.copy()
        x[:, 3] = 1.0
        return x

    result = discover_layer(_driven_trace(1, extra=with_constant), 'h', q=0.2, repetitions=3, offset=0)
    assert result.dropped == [3]
    assert 3 not in result.selected
    assert result.frequency[3] == 0.0
    assert result.n_retained == 9
    assert result.frequency.shape == (10,)


def test_discovery_is_deterministic_across_workers():
    trace = _driven_trace(2)
    serial = DiscoveryService(repetitions=4, offset=0, n_jobs=1).discover(trace, q=0.2, seed=9)[0]
    parallel = DiscoveryService(repetitions=4, offset=0, n_jobs=2).discover(trace, q=0.2, seed=9)[0]
    assert np.array_equal(serial.frequency, parallel.frequency)
    assert serial.taus == parallel.taus


def test_correlated_group_members_share_their_fate():
    def with_twin(x, rng):
        x = x.copy()
        x[:, 1] = x[:, 0] + 0.01 * rng.standard_normal(x.shape[0])
        return x

    result = discover_layer(_driven_trace(4, extra=with_twin), 'h', q=0.2, repetitions=3, offset=0,
                            group_threshold=0.9)
    assert [0, 1] in result.groups
    assert result.frequency[0] == result.frequency[1]


def test_failed_layer_is_recorded_and_skipped(rng):
    n = 10
    mask = np.zeros(n, dtype=bool)
    mask[0] = True
    trace = ActivationTrace(
        layers=(LayerMatrix('a', rng.standard_normal((n, 3))), LayerMatrix('b', rng.standard_normal((n, 2)))),
        response=rng.standard_normal(n),
        class_mask=mask,
    )
    result = neucept_discover(trace, q_per_layer=0.2, repetitions=2)[0]
    assert result.layer_id == 'a'
    assert result.selected == []
    assert "fewer than 2" in result.error
    assert math.isinf(result.tau)


def test_default_layers_exclude_the_output(small_trace):
    results = neucept_discover(small_trace, q_per_layer=0.3, repetitions=2, all_samples=True)
    assert [r.layer_id for r in results] == ['input']


def test_configuration_errors(small_trace):
    with pytest.raises(ConfigError, match="statistic"):
        neucept_discover(small_trace, statistic='ridge')
    with pytest.raises(ConfigError, match="repetitions"):
        neucept_discover(small_trace, repetitions=0)
    with pytest.raises(ConfigError, match="q values"):
        neucept_discover(small_trace, layer_ids=['input'], q_per_layer=[0.1, 0.2])
    with pytest.raises(ConfigError, match="must lie in"):
        neucept_discover(small_trace, q_per_layer=1.5)
    with pytest.raises(TraceError, match="unknown layer id"):
        neucept_discover(small_trace, layer_ids=['hidden'])


def test_default_q_by_width():
    assert default_q(128) == 0.1
    assert default_q(129) == 0.4
    assert q_from_precision(0.9) == pytest.approx(0.1)
    with pytest.raises(ConfigError):
        q_from_precision(1.0)


def test_activation_baseline_examples():
    data = np.zeros((6, 4))
    data[:, 2] = 10.0
    trace = ActivationTrace(layers=(LayerMatrix('a', data),), response=np.arange(6.0))
    assert baseline_activation_select(trace, 'a', 1) == [2]
    assert baseline_activation_select(trace, 'a', 4) == [0, 1, 2, 3]

    ties = ActivationTrace(layers=(LayerMatrix('a', np.ones((6, 2))),), response=np.arange(6.0))
    assert baseline_activation_select(ties, 'a', 1) == [0]


def test_top_neurons_ranking():
    result = SelectionResult(
        layer_id='a', q=0.1, tau=1.0, selected=[0, 2],
        frequency=np.array([0.5, 0.1, 0.5, 0.9]),
        w_mean=np.array([0.2, 0.0, 0.3, 0.1]),
    )
    assert top_neurons(result, 3) == [3, 2, 0]


def test_selection_result_serializes_infinite_tau():
    result = SelectionResult(layer_id='a', q=0.1, tau=math.inf, selected=[], frequency=np.zeros(3),
                             taus=[math.inf, 0.5])
    payload = result.to_dict()
    assert payload['tau'] is None
    assert payload['taus'] == [None, 0.5]
    restored = SelectionResult.from_dict(payload)
    assert math.isinf(restored.tau)
    assert restored.taus == [math.inf, 0.5]


@pytest.mark.slow
@pytest.mark.parametrize("statistic, rho", [('lasso_cd', 0.3), ('marginal_corr', 0.0)])
def test_linear_gaussian_fdr_and_power(statistic, rho):
    fdps, powers = [], []
    for trial in range(200):
        x, y, case = linear_gaussian_design(p=200, support_size=30, amplitude=3.5, rho=rho, n=500, seed=trial)
        result = neucept_discover(linear_trace(x, y), q_per_layer=0.2, statistic=statistic,
                                  repetitions=1, seed=trial, all_samples=True)[0]
        fdps.append(false_discovery_proportion(result.selected, case.support))
        powers.append(power(result.selected, case.support))
    assert np.mean(fdps) <= 0.25
    assert np.mean(powers) >= 0.5


@pytest.mark.slow
def test_independent_response_keeps_false_discoveries_rare():
    fdps = []
    for trial in range(200):
        x, y, case = linear_gaussian_design(p=50, support_size=10, amplitude=0.0, rho=0.3, n=200, seed=trial)
        result = neucept_discover(linear_trace(x, y), q_per_layer=0.2, repetitions=1, seed=trial,
                                  all_samples=True)[0]
        assert case.support.size == 0
        fdps.append(false_discovery_proportion(result.selected, case.support))
    assert np.mean(fdps) <= 0.25


def test_layers_below_the_knockoff_plus_floor_are_flagged(caplog):
    trace = _driven_trace(0, p=3)
    with caplog.at_level(logging.WARNING, logger='services.discovery_service'):
        result = discover_layer(trace, 'h', q=0.1, repetitions=2)
    assert result.selected == []
    assert "cannot reach the 10 discoveries" in caplog.text
    assert "empty selection" in caplog.text
