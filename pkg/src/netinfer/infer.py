"""Whole-network inference: one chain (or one KEB fit) per target node.

Target nodes decouple given the measurements, so a full-network run is p
independent per-target problems.  Workers are forked processes with
per-target random streams spawned from the master seed, which makes the
result identical whether targets run serially or in parallel.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from typing import Optional

import numpy as np

from . import accel
from .data import TimeSeriesExperiment, build_regression, full_structure
from .errors import UsageError
from .keb import KEBOptions, KEBResult, keb_optimize
from .kernels import KernelConfig
from .proposals import ProposalScales
from .sampler import ChainConfig, run_rjmcmc
from .summary import PosteriorSummary, fitness, predict_one_step, summarize_trace

METHODS = ("rjmcmc", "keb")


@dataclass
class InferenceConfig:
    """Method, kernel, chain budget and parallelism for a network run."""

    method: str = "rjmcmc"
    kernel_family: str = "tc"
    truncation: int = 20
    t_max: int = 6000
    burn_in_fraction: float = 0.5
    thin: int = 1
    seed: int = 0
    scales: ProposalScales = field(default_factory=ProposalScales)
    store_w: bool = True
    keb: KEBOptions = field(default_factory=KEBOptions)
    workers: int = 1
    checkpoint_dir: Optional[str] = None
    checkpoint_every: int = 0
    resume: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise UsageError("burn-in fraction must lie in [0, 1)")

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(self.kernel_family, self.truncation)


@dataclass
class TargetResult:
    """Per-target readout shared by both methods."""

    target: int
    parents: tuple
    link_scores: np.ndarray
    summary: Optional[PosteriorSummary] = None
    keb: Optional[KEBResult] = None
    fitness: Optional[float] = None


@dataclass
class NetworkResult:
    method: str
    p: int
    m: int
    targets: list

    def node_adjacency(self) -> np.ndarray:
        adj = np.zeros((self.p, self.p), dtype=bool)
        for t in self.targets:
            adj[t.target] = t.parents[: self.p]
        np.fill_diagonal(adj, False)
        return adj

    def input_adjacency(self) -> np.ndarray:
        adj = np.zeros((self.p, self.m), dtype=bool)
        for t in self.targets:
            adj[t.target] = t.parents[self.p :]
        return adj

    def node_confidence(self) -> np.ndarray:
        conf = np.zeros((self.p, self.p))
        for t in self.targets:
            conf[t.target] = t.link_scores[: self.p]
        np.fill_diagonal(conf, 0.0)
        return conf

    def input_confidence(self) -> np.ndarray:
        conf = np.zeros((self.p, self.m))
        for t in self.targets:
            conf[t.target] = t.link_scores[self.p :]
        return conf


def _target_seed(seed: int, target: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(target,))


def infer_target(
    experiments, target: int, config: InferenceConfig,
    validation: Optional[list] = None,
) -> TargetResult:
    """Run the configured method for a single target node."""
    p, m = experiments[0].p, experiments[0].m
    cfg = config.kernel_config()
    problem = build_regression(experiments, full_structure(p, m, target), cfg.truncation)
    if config.method == "rjmcmc":
        ckpt_path = None
        if config.checkpoint_dir:
            os.makedirs(config.checkpoint_dir, exist_ok=True)
            ckpt_path = os.path.join(config.checkpoint_dir, f"target_{target:03d}.json")
        chain_cfg = ChainConfig(
            kernel=cfg,
            t_max=config.t_max,
            burn_in=int(config.t_max * config.burn_in_fraction),
            thin=config.thin,
            scales=config.scales,
            store_w=config.store_w,
            checkpoint_path=ckpt_path,
            checkpoint_every=config.checkpoint_every,
        )
        if config.resume and ckpt_path and os.path.exists(ckpt_path):
            trace = run_rjmcmc(problem, chain_cfg, resume_from=ckpt_path)
        else:
            rng = np.random.default_rng(_target_seed(config.seed, target))
            trace = run_rjmcmc(problem, chain_cfg, rng)
        summary = summarize_trace(trace)
        result = TargetResult(
            target=target,
            parents=summary.map_structure.parents,
            link_scores=summary.link_probs,
            summary=summary,
        )
        w_hat, structure = summary.w_hat, summary.map_structure
    else:
        opts = replace(
            config.keb, seed=int(_target_seed(config.seed, target).generate_state(1)[0])
        )
        keb_res = keb_optimize(problem, cfg, opts)
        result = TargetResult(
            target=target,
            parents=keb_res.selected.parents,
            link_scores=keb_res.link_confidence,
            keb=keb_res,
        )
        w_hat, structure = keb_res.w_hat, problem.structure
    if validation and w_hat is not None:
        fits = []
        for j, exp in enumerate(validation):
            w = w_hat[min(j, len(w_hat) - 1)]
            y_hat = predict_one_step(w, structure, exp, cfg.truncation)
            y = exp.nodes[target][cfg.truncation :]
            if np.ptp(y) > 0:
                fits.append(fitness(y, y_hat))
        if fits:
            result.fitness = float(np.mean(fits))
    return result


def _worker(payload):
    (nodes_list, inputs_list, labels, target, config, val_payload) = payload
    experiments = [
        TimeSeriesExperiment(nodes=n, inputs=i, label=l)
        for n, i, l in zip(nodes_list, inputs_list, labels)
    ]
    validation = None
    if val_payload is not None:
        validation = [
            TimeSeriesExperiment(nodes=n, inputs=i, label=l)
            for n, i, l in zip(*val_payload)
        ]
    return infer_target(experiments, target, config, validation)


def infer_network(
    experiments, config: InferenceConfig, validation: Optional[list] = None,
    targets: Optional[list] = None,
) -> NetworkResult:
    """Infer every target node's parent set, optionally in parallel."""
    if not experiments:
        raise UsageError("need at least one experiment")
    p, m = experiments[0].p, experiments[0].m
    targets = list(range(p)) if targets is None else list(targets)
    if config.workers > 1 and len(targets) > 1:
        accel.warmup()  # compile once; forked workers inherit the JIT state
        payloads = []
        val_payload = None
        if validation is not None:
            val_payload = (
                [e.nodes for e in validation],
                [e.inputs for e in validation],
                [e.label for e in validation],
            )
        for t in targets:
            payloads.append((
                [e.nodes for e in experiments],
                [e.inputs for e in experiments],
                [e.label for e in experiments],
                t, config, val_payload,
            ))
        ctx = get_context("fork")
        with ProcessPoolExecutor(
            max_workers=min(config.workers, len(targets)), mp_context=ctx
        ) as pool:
            results = list(pool.map(_worker, payloads))
    else:
        results = [infer_target(experiments, t, config, validation) for t in targets]
    return NetworkResult(method=config.method, p=p, m=m, targets=results)
