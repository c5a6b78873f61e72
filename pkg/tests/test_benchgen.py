import numpy as np
import pytest

from netinfer.benchgen import (
    BenchmarkProtocol,
    GroundTruthNetwork,
    SimulationConfig,
    dsf_adjacency,
    generate_random_network,
    generate_ring_network,
    run_monte_carlo,
    score_topology,
    simulate,
)
from netinfer.errors import UsageError


def test_random_network_properties():
    rng = np.random.default_rng(0)
    for _ in range(20):
        net = generate_random_network(6, 4, 0.3, rng)
        assert net.spectral_radius < 1.0
        deg = net.node_adjacency.sum(axis=0) + net.node_adjacency.sum(axis=1)
        assert np.all(deg > 0)
        assert not np.any(np.diag(net.node_adjacency))
        assert net.m == 6  # every state carries its own measured input


def test_random_network_density_one_fully_connected():
    rng = np.random.default_rng(1)
    net = generate_random_network(4, 4, 1.0, rng)
    offdiag = ~np.eye(4, dtype=bool)
    assert np.all(net.node_adjacency[offdiag])


def test_no_hidden_nodes_adjacency_is_zero_pattern():
    rng = np.random.default_rng(2)
    net = generate_random_network(5, 5, 0.4, rng)
    expected = net.A != 0
    np.fill_diagonal(expected, False)
    assert np.array_equal(net.node_adjacency, expected)
    # inputs are one-to-one when nothing is hidden
    assert np.array_equal(net.input_adjacency, np.eye(5, dtype=bool))


def test_seeded_generation_at_paper_scale():
    rng = np.random.default_rng(3)
    net = generate_random_network(15, 10, 0.15, rng)
    assert net.p == 10 and net.n == 15
    assert net.spectral_radius < 1.0


def test_hidden_path_induces_link():
    # node 1 -> hidden 3 -> node 2 with no direct measured edge
    A = np.array([
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.5],
        [0.5, 0.0, 0.0],
    ])
    node_adj, input_adj = dsf_adjacency(A, np.eye(3), 2)
    assert node_adj[1, 0]
    assert not node_adj[0, 1]
    # hidden node's input reaches node 2 through the hidden state
    assert input_adj[1, 2]
    assert not input_adj[0, 2]


def test_ring_network_shape():
    rng = np.random.default_rng(4)
    net = generate_ring_network(3, rng)
    assert net.node_adjacency.sum() == 3
    assert net.input_adjacency.sum() == 1
    assert net.input_adjacency[0, 0]
    assert net.spectral_radius < 1.0
    # cyclic permutation pattern
    expected = np.zeros((3, 3), dtype=bool)
    for i in range(3):
        expected[(i + 1) % 3, i] = True
    assert np.array_equal(net.node_adjacency, expected)
    with pytest.raises(UsageError):
        generate_ring_network(2, rng)


def test_simulate_zero_case():
    rng = np.random.default_rng(5)
    net = generate_ring_network(3, rng)
    exp = simulate(net, SimulationConfig(length=20, snr="nonoise"), rng)
    # nonoise with inputs active: outputs driven by inputs only
    assert exp.m == 1 and exp.p == 3
    silent = GroundTruthNetwork(
        A=net.A, B=np.zeros((3, 1)), measured=3,
        node_adjacency=net.node_adjacency, input_adjacency=np.zeros((3, 1), dtype=bool),
    )
    quiet = simulate(silent, SimulationConfig(length=20, snr="nonoise"), rng)
    assert np.array_equal(quiet.nodes, np.zeros((3, 20)))


def test_snr_definition():
    assert SimulationConfig(length=10, snr=10.0).noise_variance() == pytest.approx(0.1)
    assert SimulationConfig(length=10, snr=0.0).noise_variance() == pytest.approx(1.0)
    assert SimulationConfig(length=10, snr="nonoise").noise_variance() == 0.0
    cfg = SimulationConfig(length=10, snr="purenoise")
    assert cfg.noise_variance() == 1.0
    assert not cfg.inputs_active


def test_purenoise_has_no_input_series():
    rng = np.random.default_rng(6)
    net = generate_random_network(4, 3, 0.4, rng)
    exp = simulate(net, SimulationConfig(length=30, snr="purenoise"), rng)
    assert exp.m == 0
    assert exp.nodes.shape == (3, 30)


def test_simulate_reproducible_and_stable():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        net = generate_random_network(5, 4, 0.3, rng)
        exp = simulate(net, SimulationConfig(length=200, snr=10.0), rng)
        first = exp.nodes[:, :100].var()
        second = exp.nodes[:, 100:].var()
        assert np.isfinite(exp.nodes).all()
        assert second < 50 * (first + 1e-12)
    rng_a = np.random.default_rng(7)
    net_a = generate_random_network(4, 3, 0.4, rng_a)
    exp_a = simulate(net_a, SimulationConfig(length=25, snr=5.0), rng_a)
    rng_b = np.random.default_rng(7)
    net_b = generate_random_network(4, 3, 0.4, rng_b)
    exp_b = simulate(net_b, SimulationConfig(length=25, snr=5.0), rng_b)
    assert np.array_equal(exp_a.nodes, exp_b.nodes)
    assert np.array_equal(exp_a.inputs, exp_b.inputs)


def _toy_truth():
    node_adj = np.array([[False, True], [False, False]])
    input_adj = np.array([[True, False], [False, True]])
    return GroundTruthNetwork(
        A=np.eye(2) * 0.5, B=np.eye(2), measured=2,
        node_adjacency=node_adj, input_adjacency=input_adj,
    )


def test_score_perfect_recovery():
    truth = _toy_truth()
    s = score_topology(truth.node_adjacency, truth.input_adjacency, truth)
    assert s.tpr == 100.0
    assert s.prec == 100.0


def test_score_with_one_false_link():
    truth = _toy_truth()
    # truth has 4 links; infer all of them plus one decoy
    inferred_inputs = truth.input_adjacency.copy()
    inferred_inputs[0, 1] = True
    truth4 = GroundTruthNetwork(
        A=truth.A, B=truth.B, measured=2,
        node_adjacency=np.array([[False, True], [True, False]]),
        input_adjacency=np.array([[True, False], [False, True]]),
    )
    s = score_topology(truth4.node_adjacency, inferred_inputs, truth4)
    assert s.tpr == 100.0
    assert s.prec == pytest.approx(80.0)


def test_score_empty_inferred_prec_undefined():
    truth = _toy_truth()
    s = score_topology(np.zeros((2, 2), bool), np.zeros((2, 2), bool), truth)
    assert s.prec is None
    assert s.tpr == 0.0


def test_score_indicator_confidences_give_unit_areas():
    truth = _toy_truth()
    s = score_topology(
        truth.node_adjacency, truth.input_adjacency, truth,
        truth.node_adjacency.astype(float), truth.input_adjacency.astype(float),
    )
    assert s.auroc == 1.0
    assert s.auprec == 1.0


def test_score_relabeling_invariance():
    rng = np.random.default_rng(8)
    net = generate_random_network(5, 5, 0.4, rng)
    inferred = rng.random((5, 5)) < 0.4
    np.fill_diagonal(inferred, False)
    conf = rng.random((5, 5))
    s1 = score_topology(inferred, None, net, conf, None)
    perm = rng.permutation(5)
    P = np.eye(5, dtype=bool)[perm]
    net_p = GroundTruthNetwork(
        A=net.A[np.ix_(perm, perm)], B=net.B[perm], measured=5,
        node_adjacency=net.node_adjacency[np.ix_(perm, perm)],
        input_adjacency=net.input_adjacency[perm],
    )
    s2 = score_topology(
        inferred[np.ix_(perm, perm)], None, net_p, conf[np.ix_(perm, perm)], None
    )
    assert s1.tpr == s2.tpr and s1.prec == s2.prec
    assert s1.auroc == pytest.approx(s2.auroc, abs=1e-12)


def test_monte_carlo_with_stub_method():
    protocol = BenchmarkProtocol(
        family="ring", nodes=4, lengths=(30, 40), trials=2, truncation=3, seed=1
    )

    def perfect(experiments, truth, seed):
        return (truth.node_adjacency, truth.input_adjacency,
                truth.node_adjacency.astype(float), truth.input_adjacency.astype(float))

    def broken(experiments, truth, seed):
        raise RuntimeError("intentionally failing method")

    report = run_monte_carlo(protocol, {"perfect": perfect, "broken": broken})
    table = report.table()
    assert len(table) == 4  # 2 methods x 2 lengths
    for cell in table:
        if cell["method"] == "perfect":
            assert cell["tpr"] == 100.0
            assert cell["prec"] == 100.0
            assert cell["trials"] == 2
            assert cell["failures"] == 0
        else:
            assert cell["trials"] == 0
            assert cell["failures"] == 2


def test_generator_parameter_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(UsageError):
        generate_random_network(3, 4, 0.5, rng)
    with pytest.raises(UsageError):
        generate_random_network(4, 3, 0.0, rng)
