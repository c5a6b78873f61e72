"""Kernel empirical-Bayes baseline: marginal-likelihood optimization.

Minimizes, over the full candidate structure,

    sum_j  Y_j'(sigma_j I + Phi_j LK Phi_j')^{-1} Y_j
         + log|sigma_j I + Phi_j LK Phi_j'|

by cyclic coordinate descent with derivative-free line searches (golden
section on a log grid for the scale-type coordinates, linear for the decay
coordinates), multi-started from prior draws.  Topology is read off the
optimized ARD scales: a group whose lambda falls below a relative
threshold is declared absent; optional backward selection then prunes the
weakest group while the objective does not materially worsen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import accel
from .bayes import A1, B1, _check_sigma, conditional_W_posterior
from .data import ModelStructure, RegressionProblem
from .errors import NumericalError, UsageError
from .kernels import BETA_DIM, BETA_DOMAINS, KernelConfig, as_beta_array, block_factor

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def keb_objective(problem: RegressionProblem, lam, betas, sigma, cfg: KernelConfig) -> float:
    """The empirical-Bayes cost; equals -2 log_marginal minus its 2-pi terms."""
    sig = _check_sigma(sigma, problem.n_experiments)
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    cfac = block_factor(cfg, lam, as_beta_array(cfg.family, betas, lam.shape[0]))
    d = problem.dim
    total = 0.0
    for j in range(problem.n_experiments):
        n = problem.Y[j].shape[0]
        if d < n:
            ld, quad = accel.marginal_small(
                cfac, problem.grams()[j], problem.cross()[j], float(problem.yty()[j]), n, sig[j]
            )
        else:
            ld, quad = accel.marginal_large(cfac, problem.Phi[j], problem.Y[j], sig[j])
        total += ld + quad
    return float(total)


@dataclass
class KEBOptions:
    """Optimizer knobs; the defaults favour robustness over speed."""

    restarts: int = 5
    max_sweeps: int = 30
    line_iters: int = 30
    rel_tol: float = 1e-6
    lam_max: float = 1e3
    lam_min: float = 1e-8
    sigma_min_rel: float = 1e-8
    sigma_max_rel: float = 10.0
    ard_threshold_rel: float = 1e-6
    backward: bool = False
    backward_tol: float = 1e-4
    seed: int = 0


@dataclass
class KEBResult:
    lam: np.ndarray
    betas: np.ndarray
    sigma: np.ndarray
    objective: float
    link_confidence: np.ndarray
    selected: ModelStructure
    converged: bool
    sweeps: int
    w_hat: list = field(default=None)


def _golden_min(f, lo: float, hi: float, iters: int):
    """Deterministic golden-section search; returns the best evaluated point."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    best_x, best_f = (x1, f1) if f1 <= f2 else (x2, f2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        if f1 <= best_f:
            best_x, best_f = x1, f1
        if f2 <= best_f:
            best_x, best_f = x2, f2
    return best_x, best_f


def _safe_objective(problem, lam, betas, sigma, cfg):
    try:
        return keb_objective(problem, lam, betas, sigma, cfg)
    except (NumericalError, np.linalg.LinAlgError):
        return np.inf


def _optimize_once(problem, cfg, opts, lam0, betas0, sigma0):
    lam = lam0.copy()
    betas = betas0.copy()
    sigma = sigma0.copy()
    fam = cfg.family
    dims = BETA_DIM[fam]
    scale = max(float(np.mean(problem.yty() / np.asarray(problem.nrows))), 1e-12)
    sig_lo = math.log(opts.sigma_min_rel * scale)
    sig_hi = math.log(opts.sigma_max_rel * scale)
    current = _safe_objective(problem, lam, betas, sigma, cfg)
    sweeps = 0
    converged = False

    def lam_pass(current):
        for i in range(lam.shape[0]):
            def f_lam(loglx, i=i):
                trial = lam.copy()
                trial[i] = math.exp(loglx)
                return _safe_objective(problem, trial, betas, sigma, cfg)

            x, fx = _golden_min(f_lam, math.log(opts.lam_min), math.log(opts.lam_max),
                                opts.line_iters)
            # the ARD boundary: an exact zero is a candidate golden section
            # can never reach from inside the log grid
            trial = lam.copy()
            trial[i] = 0.0
            f0 = _safe_objective(problem, trial, betas, sigma, cfg)
            if f0 <= fx and f0 <= current:
                lam[i], current = 0.0, f0
            elif fx < current:
                lam[i], current = math.exp(x), fx
        return current

    for sweeps in range(1, opts.max_sweeps + 1):
        previous = current
        current = lam_pass(current)
        for i in range(betas.shape[0]):
            if lam[i] == 0.0:
                continue
            for c in range(dims):
                lo, hi = BETA_DOMAINS[fam][c]

                def f_beta(bx, i=i, c=c):
                    trial = betas.copy()
                    trial[i, c] = bx
                    return _safe_objective(problem, lam, trial, sigma, cfg)

                x, fx = _golden_min(f_beta, lo + 1e-6, hi - 1e-6, opts.line_iters)
                if fx < current:
                    betas[i, c], current = x, fx
        for j in range(sigma.shape[0]):
            def f_sig(logsx, j=j):
                trial = sigma.copy()
                trial[j] = math.exp(logsx)
                return _safe_objective(problem, lam, betas, trial, cfg)

            x, fx = _golden_min(f_sig, sig_lo, sig_hi, opts.line_iters)
            if fx < current:
                sigma[j], current = math.exp(x), fx
        if previous - current <= opts.rel_tol * (abs(previous) + 1.0):
            converged = True
            break
    # leave the ARD scales coordinate-optimal at the final (beta, sigma)
    current = lam_pass(current)
    return lam, betas, sigma, current, converged, sweeps


def keb_link_confidence(w_hat, n_groups: int) -> np.ndarray:
    """Per-group norm ratios ||w_g|| / ||w||, pooled over experiments.

    These are ranking scores, not probabilities: their squares, not the
    values themselves, sum to one over the disjoint groups.
    """
    if isinstance(w_hat, np.ndarray):
        w_hat = [w_hat]
    stacked = [np.asarray(w, dtype=np.float64) for w in w_hat]
    d = stacked[0].shape[0]
    if d % n_groups != 0 or any(w.shape[0] != d for w in stacked):
        raise UsageError("coefficient layout does not split into equal groups")
    T = d // n_groups
    flat = np.concatenate([w.reshape(n_groups, T) for w in stacked], axis=1)
    total = float(np.linalg.norm(flat))
    if total == 0.0:
        return np.zeros(n_groups)
    return np.linalg.norm(flat, axis=1) / total


def keb_optimize(
    problem: RegressionProblem, cfg: KernelConfig, opts: Optional[KEBOptions] = None
) -> KEBResult:
    """Multi-start coordinate descent on the empirical-Bayes objective."""
    opts = opts or KEBOptions()
    rng = np.random.default_rng(opts.seed)
    m = problem.n_groups
    fam = cfg.family
    sigma0 = _ls_sigma(problem)
    best = None
    for _ in range(max(1, opts.restarts)):
        lam0 = B1 / rng.standard_gamma(A1, size=m)
        betas0 = np.zeros((m, 2))
        for c in range(BETA_DIM[fam]):
            lo, hi = BETA_DOMAINS[fam][c]
            betas0[:, c] = rng.uniform(lo + 1e-3, hi - 1e-3, size=m)
        result = _optimize_once(problem, cfg, opts, lam0, betas0, sigma0.copy())
        if best is None or result[3] < best[3]:
            best = result
    lam, betas, sigma, objective, converged, sweeps = best
    if opts.backward:
        lam, betas, sigma, objective = _backward_select(
            problem, cfg, opts, lam, betas, sigma, objective
        )
    structure = _ard_structure(problem, lam, opts)
    w_hat = _posterior_mean(problem, cfg, lam, betas, sigma)
    confidence = keb_link_confidence(w_hat, m)
    return KEBResult(
        lam=lam,
        betas=betas,
        sigma=sigma,
        objective=objective,
        link_confidence=confidence,
        selected=structure,
        converged=converged,
        sweeps=sweeps,
        w_hat=w_hat,
    )


def _ls_sigma(problem) -> np.ndarray:
    out = np.empty(problem.n_experiments)
    for j, (Y, Phi) in enumerate(zip(problem.Y, problem.Phi)):
        w, *_ = np.linalg.lstsq(Phi, Y, rcond=None)
        r = Y - Phi @ w
        n = Y.shape[0]
        out[j] = max(float(r @ r) / n, 1e-8 * float(Y @ Y) / n, 1e-10)
    return out


def _posterior_mean(problem, cfg, lam, betas, sigma) -> list:
    posts = conditional_W_posterior(problem, lam, betas, sigma, cfg)
    return [post.mu for post in posts]


def _ard_structure(problem, lam, opts) -> ModelStructure:
    target = problem.structure.target
    tau = opts.ard_threshold_rel * float(np.max(lam)) if np.max(lam) > 0 else 0.0
    parents = [False] * problem.structure.n_groups
    for g, lam_g in zip(problem.groups, lam):
        parents[g] = bool(lam_g > tau)
    parents[target] = True
    return ModelStructure(target, tuple(parents))


def _backward_select(problem, cfg, opts, lam, betas, sigma, objective):
    """Greedy removal of the weakest group while the objective holds.

    Operates on sub-problems of the original universe and re-embeds the
    surviving hyperparameters into full-universe vectors (removed groups
    get lambda = 0, which the zero-block convention treats exactly).
    """
    universe = problem
    target = problem.structure.target
    groups = list(problem.groups)
    warm = KEBOptions(**{**opts.__dict__, "restarts": 1,
                         "max_sweeps": max(3, opts.max_sweeps // 4), "backward": False})
    while True:
        candidates = [g for g in groups if g != target]
        if not candidates:
            break
        by_scale = {g: lam[b] for b, g in enumerate(groups)}
        weakest = min(candidates, key=lambda g: (by_scale[g], g))
        keep = [b for b, g in enumerate(groups) if g != weakest]
        parents = [False] * universe.structure.n_groups
        for g in groups:
            parents[g] = g != weakest
        sub = universe.subset(ModelStructure(target, tuple(parents)))
        lam_t, betas_t, sigma_t, obj_t, _, _ = _optimize_once(
            sub, cfg, warm, lam[keep].copy(), betas[keep].copy(), sigma.copy()
        )
        if obj_t <= objective + opts.backward_tol * (abs(objective) + 1.0):
            groups = [g for g in groups if g != weakest]
            lam, betas, sigma, objective = lam_t, betas_t, sigma_t, obj_t
        else:
            break
    lam_full = np.zeros(universe.n_groups)
    betas_full = np.zeros((universe.n_groups, 2))
    betas_full[:, 0] = 0.5
    for b, g in enumerate(groups):
        block = universe.groups.index(g)
        lam_full[block] = lam[b]
        betas_full[block] = betas[b]
    return lam_full, betas_full, sigma, objective
