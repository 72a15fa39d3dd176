import numpy as np
import pytest

from conftest import K_TRUE, critical_neurons
from exceptions import ConfigError, DataError
from services.evaluation_service import as_selections, clusters_entropy, label_entropy
from services.learning_service import LearningService, critical_representatives, neucept_learn

HIDDEN = ['hidden_1', 'hidden_2']


@pytest.fixture
def pkt_selections(pkt_spec, pkt_simulation):
    return as_selections(pkt_simulation.trace, critical_neurons(pkt_spec, HIDDEN))


def test_raw_critical_activations_without_limits(pkt_spec, pkt_simulation, pkt_selections):
    trace = pkt_simulation.trace
    v, reps = critical_representatives(trace, pkt_selections)
    expected = np.hstack([
        np.asarray(trace.layer(lid).data, dtype=np.float64)[:, pkt_spec.critical_sets[pkt_spec.layer_index(lid)]]
        for lid in HIDDEN
    ])
    assert np.array_equal(v, expected)
    assert [rep.layer_id for rep in reps] == HIDDEN
    assert all(len(group) == 1 for rep in reps for group in rep.groups)


def test_limits_bound_the_representatives(pkt_simulation, pkt_selections):
    v, reps = critical_representatives(pkt_simulation.trace, pkt_selections, limits={'hidden_1': 3, 'hidden_2': 2})
    assert [rep.n_groups for rep in reps] == [3, 2]
    assert v.shape == (pkt_simulation.trace.n_samples, 5)
    assert sorted(j for group in reps[0].groups for j in group) == pkt_selections[0].selected


def test_top_k_compactness(pkt_simulation, pkt_selections):
    v, reps = critical_representatives(pkt_simulation.trace, pkt_selections, top_k=2)
    assert v.shape[1] == 4
    assert all(rep.n_groups == 2 for rep in reps)


def test_mechanisms_are_recovered_on_the_prior_knowledge_network(pkt_simulation, pkt_selections):
    assignment = neucept_learn(pkt_simulation.trace, pkt_selections, k=K_TRUE, seed=0)
    assert assignment.k == K_TRUE
    assert clusters_entropy(assignment.c, pkt_simulation.latent_c) <= 0.3


def test_single_mechanism_keeps_the_prior_entropy(pkt_simulation, pkt_selections):
    assignment = neucept_learn(pkt_simulation.trace, pkt_selections, k=1)
    prior = pkt_simulation.trace.prior_labels
    assert clusters_entropy(assignment.c, prior) == pytest.approx(label_entropy(prior))


def test_empty_critical_sets_are_rejected(pkt_simulation):
    empty = as_selections(pkt_simulation.trace, {lid: [] for lid in HIDDEN})
    with pytest.raises(DataError, match="empty critical set at every layer"):
        neucept_learn(pkt_simulation.trace, empty, k=2)


def test_unknown_method_is_rejected(pkt_simulation, pkt_selections):
    with pytest.raises(ConfigError, match="method"):
        neucept_learn(pkt_simulation.trace, pkt_selections, k=2, method='spectral')


def test_sweep_returns_one_assignment_per_k(pkt_simulation, pkt_selections):
    runs = LearningService(method='agglomerative').sweep(pkt_simulation.trace, pkt_selections, [1, 3, 2])
    assert [run.k for run in runs] == [1, 3, 2]
    assert all(run.representatives for run in runs)


def test_learning_is_deterministic(pkt_simulation, pkt_selections):
    service = LearningService(method='gmm', limits=2)
    first = service.learn(pkt_simulation.trace, pkt_selections, k=3, seed=4)
    second = service.learn(pkt_simulation.trace, pkt_selections, k=3, seed=4)
    assert np.array_equal(first.c, second.c)
