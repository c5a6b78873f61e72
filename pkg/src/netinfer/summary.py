"""Posterior summaries: structure distribution, MAP topology, link
probabilities, conditional posterior means, one-step prediction, fitness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import ModelStructure, TimeSeriesExperiment, _lag_matrix, structure_from_bits
from .errors import DataTooShortError, UsageError
from .sampler import ChainTrace


def empirical_structure_distribution(trace: ChainTrace) -> dict:
    """Relative visit frequency of each retained structure, keyed by bits."""
    if trace.n_stored == 0:
        raise UsageError("trace holds no post-burn-in samples")
    bits, counts = np.unique(trace.structures, return_counts=True)
    total = counts.sum()
    return {int(b): float(c) / total for b, c in zip(bits, counts)}


def map_topology(structure_probs: dict, n_groups: int, target: int) -> ModelStructure:
    """Most probable structure; ties break toward fewer links, then
    lexicographically smaller parent vectors."""
    if not structure_probs:
        raise UsageError("empty structure distribution")

    def sort_key(item):
        bits, prob = item
        s = structure_from_bits(bits, n_groups, target)
        return (-prob, s.m_links, s.parents)

    best_bits = sorted(structure_probs.items(), key=sort_key)[0][0]
    return structure_from_bits(best_bits, n_groups, target)


def link_probabilities(trace: ChainTrace, target: Optional[int] = None) -> np.ndarray:
    """P(group j is a parent | Y) per candidate group, marginalized over
    the structure distribution."""
    probs = empirical_structure_distribution(trace)
    out = np.zeros(trace.n_groups)
    for bits, p in probs.items():
        for g in range(trace.n_groups):
            if bits >> g & 1:
                out[g] += p
    return np.clip(out, 0.0, 1.0)


def posterior_means(trace: ChainTrace, structure: ModelStructure):
    """Conditional means of (W, sigma) over samples at the given structure.

    Returns (W_hat, sigma_hat) or None when the structure was never
    visited post burn-in.
    """
    if trace.sigma is None:
        raise UsageError("trace holds no sampled noise variances")
    mask = trace.structures == structure.bits()
    count = int(mask.sum())
    if count == 0:
        return None
    sigma_hat = trace.sigma[mask].mean(axis=0)
    if trace.W is None:
        return None, sigma_hat
    idx = np.nonzero(mask)[0]
    w_sum = None
    for i in idx:
        ws = trace.W[i]
        if w_sum is None:
            w_sum = [w.astype(np.float64).copy() for w in ws]
        else:
            for j, w in enumerate(ws):
                w_sum[j] += w
    w_hat = [w / count for w in w_sum]
    return w_hat, sigma_hat


def predict_one_step(
    W_hat: np.ndarray, structure: ModelStructure, experiment: TimeSeriesExperiment, T: int
) -> np.ndarray:
    """One-step-ahead prediction of the target over times T+1..N (ascending)."""
    if experiment.length < T + 1:
        raise DataTooShortError(
            f"experiment of length {experiment.length} cannot seed T={T} lags"
        )
    W_hat = np.asarray(W_hat, dtype=np.float64)
    blocks = [_lag_matrix(experiment.series(g), T) for g in structure.active]
    Phi = np.hstack(blocks)
    if W_hat.shape[0] != Phi.shape[1]:
        raise UsageError(f"W_hat has {W_hat.shape[0]} coefficients, need {Phi.shape[1]}")
    return (Phi @ W_hat)[::-1]


def fitness(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Prediction fit 100 * (1 - ||y - y_hat|| / ||y - mean(y)||)."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise UsageError("fitness needs equal-length series")
    denom = float(np.linalg.norm(y - y.mean()))
    if denom == 0.0:
        raise UsageError("fitness undefined for a constant validation signal")
    return float(100.0 * (1.0 - np.linalg.norm(y - y_hat) / denom))


@dataclass
class PosteriorSummary:
    """Everything inference reports for one target node."""

    target: int
    n_groups: int
    structure_probs: dict
    map_structure: ModelStructure
    link_probs: np.ndarray
    w_hat: Optional[list]
    sigma_hat: Optional[np.ndarray]
    alpha_hat: Optional[float]
    diagnostics: dict


def summarize_trace(trace: ChainTrace) -> PosteriorSummary:
    probs = empirical_structure_distribution(trace)
    map_struct = map_topology(probs, trace.n_groups, trace.target)
    links = link_probabilities(trace)
    means = posterior_means(trace, map_struct) if trace.sigma is not None else None
    w_hat, sigma_hat = (None, None) if means is None else means
    diagnostics = {
        "move_stats": {k: tuple(v) for k, v in trace.move_stats.items()},
        "numerical_rejects": trace.numerical_rejects,
        "n_stored": trace.n_stored,
    }
    if trace.final_scales is not None:
        diagnostics["final_scales"] = {
            "sigma0": trace.final_scales.sigma0,
            "eps": trace.final_scales.eps,
        }
    return PosteriorSummary(
        target=trace.target,
        n_groups=trace.n_groups,
        structure_probs=probs,
        map_structure=map_struct,
        link_probs=links,
        w_hat=w_hat,
        sigma_hat=sigma_hat,
        alpha_hat=None if trace.alpha is None else float(np.mean(trace.alpha)),
        diagnostics=diagnostics,
    )
