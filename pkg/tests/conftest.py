import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from netinfer import accel
from netinfer.benchgen import GroundTruthNetwork, SimulationConfig, dsf_adjacency, simulate
from netinfer.data import build_regression, full_structure
from netinfer.kernels import KernelConfig

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session", autouse=True)
def _warm_accel():
    accel.warmup()


def two_node_network():
    """p=2 measured nodes, one input into node 1 (no hidden nodes)."""
    A = np.array([[0.5, 0.3], [0.4, -0.2]])
    B = np.array([[1.0], [0.0]])
    node_adj, input_adj = dsf_adjacency(A, B, 2)
    return GroundTruthNetwork(
        A=A, B=B, measured=2, node_adjacency=node_adj, input_adjacency=input_adj
    )


def small_experiment(seed=5, length=60, snr=10.0):
    rng = np.random.default_rng(seed)
    return simulate(two_node_network(), SimulationConfig(length=length, snr=snr), rng)


@pytest.fixture
def small_problem():
    """p=2, m=1, T=5, N=60 regression problem for target node 0."""
    exp = small_experiment()
    return build_regression([exp], full_structure(2, 1, 0), 5)


@pytest.fixture
def tc5():
    return KernelConfig("tc", 5)
