import numpy as np
import pytest

from models.synthetic_network import generate_spec, simulate_trace
from preprocessing.trace_processor import ActivationTrace, LayerMatrix

WIDTHS = [16, 24, 24, 2]
CRITICAL = [8, 8, 8, 2]
K_TRUE = 4
SEED = 7
# knockoff+ floor ceil(1/q) must not exceed the 8 critical neurons per hidden layer
BENCHMARK_Q = 0.2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_trace(rng):
    n = 10
    return ActivationTrace(
        layers=(
            LayerMatrix('input', rng.standard_normal((n, 3))),
            LayerMatrix('output', rng.standard_normal((n, 2))),
        ),
        response=rng.standard_normal(n),
        class_mask=np.arange(n) < 8,
        prior_labels=np.arange(n) % 2,
        posterior_labels=np.zeros(n, dtype=np.int64),
    )


@pytest.fixture(scope='session')
def pkt_spec():
    return generate_spec(WIDTHS, CRITICAL, K_TRUE, SEED, variant='pkt')


@pytest.fixture(scope='session')
def normal_spec():
    return generate_spec(WIDTHS, CRITICAL, K_TRUE, SEED, variant='normal')


@pytest.fixture(scope='session')
def pkt_simulation(pkt_spec):
    return simulate_trace(pkt_spec, 600, seed=[SEED, 1])


@pytest.fixture(scope='session')
def normal_simulation(normal_spec):
    return simulate_trace(normal_spec, 600, seed=[SEED, 1])


def critical_neurons(spec, layer_ids):
    return {lid: spec.critical_sets[spec.layer_index(lid)].tolist() for lid in layer_ids}
