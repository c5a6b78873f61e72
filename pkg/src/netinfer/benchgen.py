"""Synthetic benchmark networks, simulation, and topology scoring.

Random networks follow the sparse-random protocol: a Gaussian sparse state
matrix, rescaled to a spectral radius drawn in [0.7, 0.95], with every
state driven by its own measured white input; only the first p states are
measured.  Ring networks are a directed cycle over p measured nodes with a
single input entering node 1.

The ground-truth adjacency over measured nodes and inputs is the zero
pattern of the partially observed model: a link exists when a direct edge
or a path running through hidden-only nodes connects source to target.

The signal-to-noise ratio is 10*log10(var_u / var_e); "nonoise" pins the
process-noise variance at zero and "purenoise" removes the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .data import TimeSeriesExperiment
from .errors import UsageError

_RADIUS_BAND = (0.7, 0.95)
_MAX_TRIES = 1000


@dataclass(frozen=True)
class GroundTruthNetwork:
    """State-space model plus its measured-universe adjacency pattern."""

    A: np.ndarray
    B: np.ndarray
    measured: int
    node_adjacency: np.ndarray
    input_adjacency: np.ndarray
    family: str = "random"

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.measured

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))


SnrSpec = Union[float, int, str]


@dataclass(frozen=True)
class SimulationConfig:
    """Sample count, noise mode, input variance and a label."""

    length: int
    snr: SnrSpec = "nonoise"
    input_variance: float = 1.0
    label: str = ""

    def noise_variance(self) -> float:
        if isinstance(self.snr, str):
            mode = self.snr.lower()
            if mode == "nonoise":
                return 0.0
            if mode == "purenoise":
                return 1.0
            raise UsageError(f"unknown SNR mode {self.snr!r}")
        return float(self.input_variance * 10.0 ** (-float(self.snr) / 10.0))

    @property
    def inputs_active(self) -> bool:
        return not (isinstance(self.snr, str) and self.snr.lower() == "purenoise")


def _reach_through_hidden(A_bool: np.ndarray, p: int) -> np.ndarray:
    """Closure of the hidden-only subgraph: R[h1, h2] iff a hidden path
    h2 -> ... -> h1 exists (including length zero)."""
    H = A_bool[p:, p:]
    h = H.shape[0]
    R = np.eye(h, dtype=bool)
    power = np.eye(h, dtype=bool)
    for _ in range(h):
        power = power @ H
        R |= power
    return R


def dsf_adjacency(A: np.ndarray, B: np.ndarray, p: int) -> tuple:
    """Zero pattern of the measured-universe model induced by (A, B).

    node_adjacency[i, j] is True when measured node j drives measured node
    i directly or through hidden-only nodes; input_adjacency[i, k] likewise
    for input k.  Self node links are structural and excluded (diag False).
    """
    A_bool = A != 0
    B_bool = B != 0
    A11 = A_bool[:p, :p]
    A12 = A_bool[:p, p:]
    A21 = A_bool[p:, :p]
    B1 = B_bool[:p]
    B2 = B_bool[p:]
    R = _reach_through_hidden(A_bool, p)
    node_adj = A11 | (A12 @ R @ A21)
    np.fill_diagonal(node_adj, False)
    input_adj = B1 | (A12 @ R @ B2)
    return node_adj, input_adj


def _rescale_radius(A: np.ndarray, rng: np.random.Generator) -> Optional[np.ndarray]:
    eigs = np.abs(np.linalg.eigvals(A))
    rho = float(np.max(eigs))
    if rho == 0.0:
        return None
    target = rng.uniform(*_RADIUS_BAND)
    return A * (target / rho)


def generate_random_network(
    n: int, p: int, density: float, rng: np.random.Generator
) -> GroundTruthNetwork:
    """Sparse random stable network; every state has its own measured input.

    Regenerates until the spectral radius is inside the unit circle and no
    measured node is isolated in the induced measured-node adjacency.
    """
    if not 1 <= p <= n:
        raise UsageError("need 1 <= p <= n")
    if not 0.0 < density <= 1.0:
        raise UsageError("density must lie in (0, 1]")
    for _ in range(_MAX_TRIES):
        values = rng.normal(size=(n, n))
        mask = rng.random((n, n)) < density
        A = values * mask
        A = _rescale_radius(A, rng)
        if A is None:
            continue
        B = np.eye(n)
        node_adj, input_adj = dsf_adjacency(A, B, p)
        degree = node_adj.sum(axis=0) + node_adj.sum(axis=1)
        if p > 1 and np.any(degree == 0):
            continue
        return GroundTruthNetwork(
            A=A, B=B, measured=p, node_adjacency=node_adj, input_adjacency=input_adj,
            family="random",
        )
    raise UsageError(
        f"no valid network found in {_MAX_TRIES} tries (n={n}, p={p}, density={density})"
    )


def generate_ring_network(p: int, rng: np.random.Generator) -> GroundTruthNetwork:
    """Directed cycle 1 -> 2 -> ... -> p -> 1 with one input at node 1."""
    if p < 3:
        raise UsageError("ring networks need p >= 3")
    for _ in range(_MAX_TRIES):
        weights = rng.normal(size=p)
        if np.any(weights == 0.0):
            continue
        A = np.zeros((p, p))
        for i in range(p):
            A[(i + 1) % p, i] = weights[i]
        A = _rescale_radius(A, rng)
        if A is None:
            continue
        B = np.zeros((p, 1))
        B[0, 0] = 1.0
        node_adj, input_adj = dsf_adjacency(A, B, p)
        return GroundTruthNetwork(
            A=A, B=B, measured=p, node_adjacency=node_adj, input_adjacency=input_adj,
            family="ring",
        )
    raise UsageError("ring generation failed")


def simulate(
    network: GroundTruthNetwork, config: SimulationConfig, rng: np.random.Generator
) -> TimeSeriesExperiment:
    """Run the state recursion and record the measured nodes and inputs.

    A transient of 10*n steps is discarded before collection starts.
    """
    if config.length < 1:
        raise UsageError("length must be >= 1")
    n = network.n
    transient = 10 * n
    total = transient + config.length
    var_e = config.noise_variance()
    if config.inputs_active:
        u = rng.normal(0.0, np.sqrt(config.input_variance), size=(network.m, total))
    else:
        u = np.zeros((network.m, total))
    e = (
        rng.normal(0.0, np.sqrt(var_e), size=(n, total))
        if var_e > 0.0
        else np.zeros((n, total))
    )
    x = np.zeros(n)
    states = np.empty((n, total))
    for t in range(total):
        states[:, t] = x
        x = network.A @ x + network.B @ u[:, t] + e[:, t]
    nodes = states[: network.p, transient:]
    if config.inputs_active:
        inputs = u[:, transient:]
    else:
        inputs = np.zeros((0, config.length))
    return TimeSeriesExperiment(nodes=nodes, inputs=inputs, label=config.label)


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


@dataclass
class TopologyScore:
    """TPR/PREC in percent; AUROC/AUPREC in [0, 1] when confidences given."""

    n_true: int
    n_inferred: int
    n_correct: int
    tpr: Optional[float]
    prec: Optional[float]
    auroc: Optional[float] = None
    auprec: Optional[float] = None


def _flatten_universe(node_matrix, input_matrix, p):
    """All scoreable link slots: node pairs minus the diagonal, then inputs."""
    out = []
    node_matrix = np.asarray(node_matrix)
    for i in range(p):
        for j in range(p):
            if i != j:
                out.append(node_matrix[i, j])
    if input_matrix is not None and np.asarray(input_matrix).size:
        out.extend(np.asarray(input_matrix).ravel())
    return np.asarray(out)


def _roc_pr_areas(labels: np.ndarray, scores: np.ndarray):
    """Trapezoidal AUROC and AUPREC from a threshold sweep over scores."""
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        return None, None
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # collapse ties: cumulative counts after each distinct threshold
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    cut = np.concatenate([distinct, [labels.size - 1]])
    tp = np.cumsum(sorted_labels)[cut]
    fp = (cut + 1) - tp
    tpr = np.concatenate([[0.0], tp / pos])
    fpr = np.concatenate([[0.0], fp / neg])
    auroc = float(np.trapezoid(tpr, fpr))
    recall = tp / pos
    precision = tp / (tp + fp)
    r = np.concatenate([[0.0], recall])
    pr = np.concatenate([[precision[0]], precision])
    auprec = float(np.trapezoid(pr, r))
    return auroc, auprec


def score_topology(
    inferred_nodes,
    inferred_inputs,
    truth: GroundTruthNetwork,
    confidence_nodes=None,
    confidence_inputs=None,
) -> TopologyScore:
    """Compare inferred boolean adjacency (and optional confidences) to truth.

    Self node links are excluded: the model always retains them, so they
    carry no topological information.
    """
    p = truth.p
    inferred_nodes = np.asarray(inferred_nodes, dtype=bool)
    if inferred_nodes.shape != (p, p):
        raise UsageError(f"inferred node adjacency must be {p}x{p}")
    if truth.m and inferred_inputs is not None and np.asarray(inferred_inputs).size:
        if np.asarray(inferred_inputs).shape != (p, truth.m):
            raise UsageError(f"inferred input adjacency must be {p}x{truth.m}")
        input_truth = truth.input_adjacency
    else:
        inferred_inputs = None
        input_truth = None
    labels = _flatten_universe(truth.node_adjacency, input_truth, p).astype(bool)
    preds = _flatten_universe(inferred_nodes, inferred_inputs, p).astype(bool)
    n_true = int(labels.sum())
    n_inferred = int(preds.sum())
    n_correct = int((labels & preds).sum())
    tpr = 100.0 * n_correct / n_true if n_true else None
    prec = 100.0 * n_correct / n_inferred if n_inferred else None
    auroc = auprec = None
    if confidence_nodes is not None:
        scores = _flatten_universe(confidence_nodes, confidence_inputs, p).astype(np.float64)
        auroc, auprec = _roc_pr_areas(labels.astype(np.float64), scores)
    return TopologyScore(
        n_true=n_true, n_inferred=n_inferred, n_correct=n_correct,
        tpr=tpr, prec=prec, auroc=auroc, auprec=auprec,
    )


# ---------------------------------------------------------------------------
# Monte Carlo harness
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkProtocol:
    """One row family of the benchmark tables: a network family, a noise
    level, a grid of data lengths, and a trial count."""

    family: str = "random"
    nodes: int = 10
    hidden: int = 5
    density: float = 0.15
    snr: SnrSpec = "nonoise"
    lengths: Sequence[int] = (100,)
    trials: int = 10
    experiments: int = 1
    truncation: int = 20
    seed: int = 0


@dataclass
class TrialResult:
    method: str
    length: int
    trial: int
    score: Optional[TopologyScore]
    fitness: Optional[float] = None
    error: Optional[str] = None


@dataclass
class MonteCarloReport:
    protocol: BenchmarkProtocol
    methods: tuple
    rows: list = field(default_factory=list)

    def cell(self, method: str, length: int) -> dict:
        scores = [
            r.score for r in self.rows
            if r.method == method and r.length == length and r.score is not None
        ]
        n_fail = sum(
            1 for r in self.rows
            if r.method == method and r.length == length and r.error is not None
        )
        tprs = [s.tpr for s in scores if s.tpr is not None]
        precs = [s.prec for s in scores if s.prec is not None]
        aurocs = [s.auroc for s in scores if s.auroc is not None]
        auprecs = [s.auprec for s in scores if s.auprec is not None]
        fits = [
            r.fitness for r in self.rows
            if r.method == method and r.length == length and r.fitness is not None
        ]

        def mean_se(xs):
            if not xs:
                return None, None
            arr = np.asarray(xs, dtype=np.float64)
            se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
            return float(arr.mean()), se

        tpr, tpr_se = mean_se(tprs)
        prec, prec_se = mean_se(precs)
        auroc, _ = mean_se(aurocs)
        auprec, _ = mean_se(auprecs)
        fit, _ = mean_se(fits)
        return {
            "method": method,
            "length": length,
            "trials": len(scores),
            "failures": n_fail,
            "tpr": tpr,
            "tpr_se": tpr_se,
            "prec": prec,
            "prec_se": prec_se,
            "auroc": auroc,
            "auprec": auprec,
            "fitness": fit,
        }

    def table(self) -> list:
        return [
            self.cell(method, length)
            for method in self.methods
            for length in self.protocol.lengths
        ]


def generate_trial_network(protocol: BenchmarkProtocol, rng) -> GroundTruthNetwork:
    if protocol.family == "random":
        return generate_random_network(
            protocol.nodes + protocol.hidden, protocol.nodes, protocol.density, rng
        )
    if protocol.family == "ring":
        return generate_ring_network(protocol.nodes, rng)
    raise UsageError(f"unknown network family {protocol.family!r}")


def run_monte_carlo(protocol: BenchmarkProtocol, methods: dict):
    """Generate -> simulate -> infer(each method) -> score, over the grid.

    ``methods`` maps a name to ``fn(experiments, truth, seed) ->
    (node_adj, input_adj, conf_nodes, conf_inputs)``.  Individual trial
    failures are recorded, never fatal.
    """
    report = MonteCarloReport(protocol=protocol, methods=tuple(methods))
    jobs = []
    for length in protocol.lengths:
        for trial in range(protocol.trials):
            jobs.append((length, trial))
    for length, trial in jobs:
        seq = np.random.SeedSequence(
            protocol.seed, spawn_key=(int(length), int(trial))
        )
        rng = np.random.default_rng(seq)
        truth = generate_trial_network(protocol, rng)
        experiments = [
            simulate(
                truth,
                SimulationConfig(length=length, snr=protocol.snr, label=f"exp_{j:03d}"),
                rng,
            )
            for j in range(protocol.experiments)
        ]
        method_seed = seq.spawn(1)[0]
        for name, fn in methods.items():
            try:
                node_adj, input_adj, conf_n, conf_i = fn(experiments, truth, method_seed)
                score = score_topology(node_adj, input_adj, truth, conf_n, conf_i)
                report.rows.append(
                    TrialResult(method=name, length=length, trial=trial, score=score)
                )
            except Exception as exc:  # noqa: BLE001 - per-trial isolation
                report.rows.append(
                    TrialResult(
                        method=name, length=length, trial=trial, score=None,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
    return report
