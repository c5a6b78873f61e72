"""Fixed-topology and trans-dimensional samplers for one target node.

The fixed-topology chain interleaves a joint (beta, lambda) MH step on the
W-marginalized posterior, an exact W draw, an exact noise-variance draw and
an alpha MH step.  The trans-dimensional chain additionally proposes Birth
(add one candidate group, hyperparameters drawn from the priors), Death
(remove one non-self group) and Update (the fixed-topology MH step) moves;
a fresh W draw always follows the move, which is what makes the reduced
(W-marginalized) acceptance ratios valid.

Move probabilities depend on the current link count M_k (M1 candidates):

    P_B = 0.3 (0 at M_k = M1, 0.6 at M_k = 1)
    P_D = 0.3 (0.6 at M_k = M1, 0 at M_k = 1)
    P_U = 1 - P_B - P_D

A frozen-hyperparameter mode keeps (lambda, beta, sigma, alpha) pinned at
caller-supplied values and samples the topology only; it exists so small
problems can be checked against exact enumeration.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import bayes
from .bayes import (
    HyperParams,
    conditional_sigma_posterior,
    conditional_W_posterior,
    log_beta_prior,
    log_lambda_prior,
    log_marginal,
    log_structure_normalizer,
    sample_invgamma,
)
from .data import ModelStructure, RegressionProblem, structure_from_bits
from .errors import NumericalError, UsageError
from .kernels import BETA_DIM, KernelConfig
from .proposals import (
    ProposalScales,
    adapt_scales,
    birth_proposal_draw,
    propose_alpha,
    propose_beta,
    propose_lambda,
)

MOVE_TYPES = ("birth", "death", "update", "alpha")

_SIGMA_INIT_FLOOR = 1e-10


def move_probabilities(m_links: int, m1: int) -> tuple:
    """(P_B, P_D) for the current link count; P_U is the remainder."""
    if not 1 <= m_links <= m1:
        raise UsageError(f"link count {m_links} outside 1..{m1}")
    pb = 0.0 if m_links == m1 else (0.6 if m_links == 1 else 0.3)
    pd = 0.0 if m_links == 1 else (0.6 if m_links == m1 else 0.3)
    return pb, pd


@dataclass(frozen=True)
class FrozenHyper:
    """Full-universe hyperparameters for the topology-only sampling mode."""

    lam: np.ndarray
    betas: np.ndarray
    sigma: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=np.float64))
        object.__setattr__(self, "betas", np.atleast_2d(np.asarray(self.betas, dtype=np.float64)))
        object.__setattr__(self, "sigma", np.atleast_1d(np.asarray(self.sigma, dtype=np.float64)))


@dataclass
class ChainConfig:
    """Everything one chain needs besides the data and the random stream."""

    kernel: KernelConfig
    t_max: int
    burn_in: Optional[int] = None
    thin: int = 1
    scales: ProposalScales = field(default_factory=ProposalScales)
    init_structure: Optional[ModelStructure] = None
    store_w: bool = True
    sample_beta_lambda: bool = True
    sample_sigma: bool = True
    sample_alpha: bool = True
    freeze: Optional[FrozenHyper] = None
    debug_validate: bool = False
    checkpoint_path: Optional[str] = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.t_max < 1:
            raise UsageError("t_max must be >= 1")
        if self.burn_in is None:
            self.burn_in = self.t_max // 2
        if not 0 <= self.burn_in < self.t_max:
            raise UsageError("burn_in must lie in [0, t_max)")
        if self.thin < 1:
            raise UsageError("thin must be >= 1")


@dataclass
class ChainState:
    """One Markov state: topology, hyperparameters, latent responses."""

    structure: ModelStructure
    lam: np.ndarray
    betas: np.ndarray
    sigma: np.ndarray
    alpha: float
    W: Optional[list] = None
    iteration: int = 0

    def validate(self, m1: int):
        mk = self.structure.m_links
        assert self.structure.parents[self.structure.target], "self group lost"
        assert 1 <= mk <= m1, "link count out of range"
        assert self.lam.shape[0] == mk and self.betas.shape[0] == mk, "hyper length mismatch"


@dataclass
class ChainTrace:
    """Post-burn-in samples plus per-move bookkeeping."""

    target: int
    n_groups: int
    t_max: int
    burn_in: int
    thin: int
    structures: np.ndarray = None
    sigma: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    W: Optional[list] = None
    move_stats: dict = field(default_factory=lambda: {k: [0, 0] for k in MOVE_TYPES})
    numerical_rejects: int = 0
    scales_history: list = field(default_factory=list)
    final_scales: Optional[ProposalScales] = None

    @property
    def n_stored(self) -> int:
        return 0 if self.structures is None else len(self.structures)

    def acceptance_rate(self, move: str) -> Optional[float]:
        att, acc = self.move_stats[move]
        return None if att == 0 else acc / att


# ---------------------------------------------------------------------------
# acceptance ratios
# ---------------------------------------------------------------------------


def _marginal_of(problem, structure, lam, betas, sigma, cfg, memo=None):
    if memo is not None:
        key = structure.bits()
        hit = memo.get(key)
        if hit is not None:
            return hit
    value = log_marginal(problem.subset(structure), lam, betas, sigma, cfg)
    if memo is not None:
        memo[structure.bits()] = value
    return value


def birth_log_ratio(
    problem: RegressionProblem,
    cfg: KernelConfig,
    struct_small: ModelStructure,
    lam_small,
    betas_small,
    struct_big: ModelStructure,
    lam_big,
    betas_big,
    sigma,
    alpha: float,
    memo: Optional[dict] = None,
) -> float:
    """log r_B for adding one group; death uses the exact negation.

    The marginal-likelihood ratio is multiplied by the reverse/forward move
    probabilities, the uniform group-selection probabilities and the
    structure-prior ratio alpha / M_k^p; the newborn group's hyperprior
    cancels against its proposal density and never appears.
    """
    m1 = problem.n_groups
    mk_t = struct_small.m_links
    mk_p = struct_big.m_links
    if mk_p != mk_t + 1:
        raise UsageError("birth ratio needs link counts differing by one")
    ml_small = _marginal_of(problem, struct_small, lam_small, betas_small, sigma, cfg, memo)
    ml_big = _marginal_of(problem, struct_big, lam_big, betas_big, sigma, cfg, memo)
    pb_t = move_probabilities(mk_t, m1)[0]
    pd_p = move_probabilities(mk_p, m1)[1]
    return float(
        (ml_big - ml_small)
        + np.log(pd_p)
        - np.log(pb_t)
        + np.log(alpha)
        + np.log(m1 - mk_t)
        - np.log(mk_p)
        - np.log(mk_p - 1.0)
    )


def update_log_ratio(
    problem, cfg, structure, lam_t, betas_t, lam_p, betas_p, sigma, logq_net: float = 0.0
) -> float:
    """log r_U for a joint (beta, lambda) refresh at fixed topology.

    ``logq_net`` is log q(reverse) - log q(forward) from the proposal
    machinery (the truncated-Gaussian erf correction; the windowed-uniform
    terms cancel except where a window was clamped at the domain boundary).
    """
    ml_p = _marginal_of(problem, structure, lam_p, betas_p, sigma, cfg)
    ml_t = _marginal_of(problem, structure, lam_t, betas_t, sigma, cfg)
    prior = (
        log_lambda_prior(lam_p)
        - log_lambda_prior(lam_t)
        + log_beta_prior(cfg.family, betas_p)
        - log_beta_prior(cfg.family, betas_t)
    )
    return float((ml_p - ml_t) + prior + logq_net)


def alpha_log_ratio(alpha_t: float, alpha_p: float, m1: int) -> float:
    """log of the alpha acceptance ratio (the Z-ratio form)."""
    return float(
        (-alpha_t + log_structure_normalizer(alpha_t, m1))
        - (-alpha_p + log_structure_normalizer(alpha_p, m1))
    )


# ---------------------------------------------------------------------------
# moves
# ---------------------------------------------------------------------------


def update_move(state: ChainState, problem, cfg, scales: ProposalScales, rng):
    """MH refresh of (beta, lambda) on the W-marginalized posterior."""
    lam_p, lqf_lam, lqr_lam = propose_lambda(rng, state.lam, scales.sigma0)
    betas_p, lqf_b, lqr_b = propose_beta(rng, state.betas, scales.eps, cfg.family)
    logq_net = (lqr_lam - lqf_lam) + (lqr_b - lqf_b)
    try:
        log_r = update_log_ratio(
            problem, cfg, state.structure, state.lam, state.betas, lam_p, betas_p, state.sigma,
            logq_net,
        )
    except NumericalError:
        return state, False, True
    if np.log(rng.uniform()) < log_r:
        return replace(state, lam=lam_p, betas=betas_p), True, False
    return state, False, False


def birth_move(state: ChainState, problem, cfg, rng, freeze: Optional[FrozenHyper] = None,
               memo: Optional[dict] = None):
    """Add one absent group, hyperparameters drawn from the priors."""
    absent = [g for g in problem.groups if not state.structure.parents[g]]
    if not absent:
        raise UsageError("birth move scheduled at the full structure")
    g = absent[int(rng.integers(len(absent)))]
    if freeze is not None:
        beta_new, lam_new = freeze.betas[g], float(freeze.lam[g])
    else:
        beta_new, lam_new, _ = birth_proposal_draw(rng, cfg.family)
    struct_p = state.structure.with_group(g)
    pos = struct_p.active.index(g)
    lam_p = np.insert(state.lam, pos, lam_new)
    betas_p = np.insert(state.betas, pos, beta_new, axis=0)
    try:
        log_r = birth_log_ratio(
            problem, cfg, state.structure, state.lam, state.betas,
            struct_p, lam_p, betas_p, state.sigma, state.alpha, memo=memo,
        )
    except NumericalError:
        return state, False, True
    if np.log(rng.uniform()) < log_r:
        return replace(state, structure=struct_p, lam=lam_p, betas=betas_p, W=None), True, False
    return state, False, False


def death_move(state: ChainState, problem, cfg, rng, freeze: Optional[FrozenHyper] = None,
               memo: Optional[dict] = None):
    """Remove one non-self group; the self group is never proposed."""
    removable = [g for g in state.structure.active if g != state.structure.target]
    if not removable:
        raise UsageError("death move scheduled at the single-link structure")
    g = removable[int(rng.integers(len(removable)))]
    pos = state.structure.active.index(g)
    struct_p = state.structure.without_group(g)
    lam_p = np.delete(state.lam, pos)
    betas_p = np.delete(state.betas, pos, axis=0)
    try:
        log_r = -birth_log_ratio(
            problem, cfg, struct_p, lam_p, betas_p,
            state.structure, state.lam, state.betas, state.sigma, state.alpha, memo=memo,
        )
    except NumericalError:
        return state, False, True
    if np.log(rng.uniform()) < log_r:
        return replace(state, structure=struct_p, lam=lam_p, betas=betas_p, W=None), True, False
    return state, False, False


def alpha_move(state: ChainState, rng, p: int, m: int):
    """Independence MH step on the structure-prior rate."""
    alpha_p, _, _ = propose_alpha(rng, state.structure.m_links)
    log_r = alpha_log_ratio(state.alpha, alpha_p, p + m)
    if np.log(rng.uniform()) < log_r:
        return replace(state, alpha=alpha_p), True
    return state, False


def gibbs_W_sigma(state: ChainState, problem, cfg, rng, sample_sigma: bool = True):
    """Exact W draw per experiment, then the conjugate noise-variance draw."""
    sub = problem.subset(state.structure)
    try:
        posts = conditional_W_posterior(sub, state.lam, state.betas, state.sigma, cfg)
        W = [post.sample(rng) for post in posts]
    except (np.linalg.LinAlgError, NumericalError) as exc:
        raise NumericalError(
            "W posterior factorization failed",
            detail={"iteration": state.iteration, "parents": state.structure.parents,
                    "lam": state.lam.tolist()},
        ) from exc
    if sample_sigma:
        a, b = conditional_sigma_posterior(sub, W)
        sigma = sample_invgamma(rng, a, b)
    else:
        sigma = state.sigma
    return replace(state, W=W, sigma=sigma)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _initial_sigma(problem: RegressionProblem) -> np.ndarray:
    """Least-squares residual variance per experiment, floored away from 0."""
    out = np.empty(problem.n_experiments)
    for j, (Y, Phi) in enumerate(zip(problem.Y, problem.Phi)):
        w, *_ = np.linalg.lstsq(Phi, Y, rcond=None)
        r = Y - Phi @ w
        n = Y.shape[0]
        scale = float(Y @ Y) / n
        out[j] = max(float(r @ r) / n, 1e-8 * scale, _SIGMA_INIT_FLOOR)
    return out


def _midpoint_betas(family: str, m_links: int) -> np.ndarray:
    betas = np.zeros((m_links, 2))
    betas[:, 0] = 0.5
    return betas


def initial_state(problem: RegressionProblem, config: ChainConfig, rng) -> ChainState:
    structure = config.init_structure or problem.structure
    if config.freeze is not None:
        fz = config.freeze
        if fz.lam.shape[0] != problem.n_groups:
            raise UsageError("frozen hyperparameters must cover the full candidate universe")
        idx = list(structure.active)
        return ChainState(
            structure=structure,
            lam=fz.lam[idx].copy(),
            betas=fz.betas[idx].copy(),
            sigma=fz.sigma.copy(),
            alpha=float(fz.alpha),
        )
    mk = structure.m_links
    lam0 = bayes.B1 / rng.standard_gamma(bayes.A1, size=mk)
    return ChainState(
        structure=structure,
        lam=lam0,
        betas=_midpoint_betas(config.kernel.family, mk),
        sigma=_initial_sigma(problem),
        alpha=1.0,
    )


# ---------------------------------------------------------------------------
# chain engines
# ---------------------------------------------------------------------------


class _Recorder:
    def __init__(self, problem, config):
        self.iterations = []
        self.structures = []
        self.sigma = [] if config.freeze is None else None
        self.alpha = [] if config.freeze is None else None
        self.W = [] if (config.store_w and config.freeze is None) else None

    def record(self, state: ChainState):
        self.iterations.append(state.iteration)
        self.structures.append(state.structure.bits())
        if self.sigma is not None:
            self.sigma.append(state.sigma.copy())
        if self.alpha is not None:
            self.alpha.append(state.alpha)
        if self.W is not None:
            self.W.append([w.copy() for w in state.W])

    def refilter(self, burn_in: int, thin: int):
        """Drop samples a resumed config's burn-in/thinning would not keep."""
        keep = [
            i for i, t in enumerate(self.iterations)
            if t > burn_in and (t - burn_in) % thin == 0
        ]
        self.iterations = [self.iterations[i] for i in keep]
        self.structures = [self.structures[i] for i in keep]
        if self.sigma is not None:
            self.sigma = [self.sigma[i] for i in keep]
            self.alpha = [self.alpha[i] for i in keep]
        if self.W is not None:
            self.W = [self.W[i] for i in keep]

    def finish(self, trace: ChainTrace):
        trace.structures = np.asarray(self.structures, dtype=np.int64)
        if self.sigma is not None:
            trace.sigma = np.asarray(self.sigma)
            trace.alpha = np.asarray(self.alpha)
        trace.W = self.W


def _run_chain(problem, config, rng, trans_dimensional, start_state=None, recorder=None,
               trace=None, adapt_counters=None, universe_m1=None):
    cfg = config.kernel
    if cfg.truncation != problem.T:
        raise UsageError("chain kernel truncation must match the problem")
    m1 = problem.n_groups
    universe_m1 = universe_m1 or m1
    frozen = config.freeze is not None
    state = start_state if start_state is not None else initial_state(problem, config, rng)
    memo = {} if frozen else None
    scales = config.scales if trace is None or trace.final_scales is None else trace.final_scales
    recorder = recorder or _Recorder(problem, config)
    trace = trace or ChainTrace(
        target=problem.structure.target,
        n_groups=m1,
        t_max=config.t_max,
        burn_in=config.burn_in,
        thin=config.thin,
    )
    upd_att, upd_acc = adapt_counters if adapt_counters else (0, 0)

    for t in range(state.iteration + 1, config.t_max + 1):
        in_burn_in = t <= config.burn_in
        if trans_dimensional:
            pb, pd = move_probabilities(state.structure.m_links, m1)
            u_move = rng.uniform()
        else:
            pb = pd = 0.0
            u_move = 1.0
        if pb > 0.0 and u_move <= pb:
            state, accepted, failed = birth_move(state, problem, cfg, rng, config.freeze, memo)
            trace.move_stats["birth"][0] += 1
            trace.move_stats["birth"][1] += int(accepted)
            trace.numerical_rejects += int(failed)
        elif pd > 0.0 and u_move <= pb + pd:
            state, accepted, failed = death_move(state, problem, cfg, rng, config.freeze, memo)
            trace.move_stats["death"][0] += 1
            trace.move_stats["death"][1] += int(accepted)
            trace.numerical_rejects += int(failed)
        else:
            if frozen or not config.sample_beta_lambda:
                # identity refresh: counted, trivially accepted
                trace.move_stats["update"][0] += 1
                trace.move_stats["update"][1] += 1
            else:
                state, accepted, failed = update_move(state, problem, cfg, scales, rng)
                trace.move_stats["update"][0] += 1
                trace.move_stats["update"][1] += int(accepted)
                trace.numerical_rejects += int(failed)
                if config.scales.adapt and in_burn_in:
                    upd_att += 1
                    upd_acc += int(accepted)
                    if upd_att >= config.scales.window:
                        scales = adapt_scales(upd_acc, upd_att, scales)
                        trace.scales_history.append((t, scales.sigma0, scales.eps))
                        upd_att = upd_acc = 0
        if not frozen:
            state = gibbs_W_sigma(
                state, problem, cfg, rng, sample_sigma=config.sample_sigma
            )
            if config.sample_alpha:
                state, acc_a = alpha_move(state, rng, universe_m1, 0)
                trace.move_stats["alpha"][0] += 1
                trace.move_stats["alpha"][1] += int(acc_a)
        state.iteration = t
        if config.debug_validate:
            state.validate(m1)
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0:
            recorder.record(state)
        if (
            config.checkpoint_path
            and config.checkpoint_every > 0
            and t % config.checkpoint_every == 0
            and t < config.t_max
        ):
            _save_checkpoint(
                config.checkpoint_path, problem, config, state, rng, recorder, trace,
                scales, (upd_att, upd_acc),
            )

    recorder.finish(trace)
    trace.final_scales = scales
    return trace


def run_fixed_topology(problem, structure, config: ChainConfig, rng,
                       init_state: Optional[ChainState] = None) -> ChainTrace:
    """Sampler at a pinned topology: update -> W -> sigma -> alpha."""
    sub = problem.subset(structure)
    return _run_chain(
        sub, config, rng, trans_dimensional=False, start_state=init_state,
        universe_m1=problem.n_groups,
    )


def run_rjmcmc(problem, config: ChainConfig, rng=None, resume_from=None,
               init_state: Optional[ChainState] = None) -> ChainTrace:
    """Trans-dimensional chain over every admissible sub-structure.

    ``resume_from`` restarts bit-exactly from a checkpoint written by a
    previous call with the same problem and config.
    """
    if resume_from is not None:
        state, rng, recorder, trace, scales, counters = _load_checkpoint(
            resume_from, problem, config
        )
        trace.final_scales = scales
        return _run_chain(
            problem, config, rng, trans_dimensional=True, start_state=state,
            recorder=recorder, trace=trace, adapt_counters=counters,
        )
    if rng is None:
        raise UsageError("run_rjmcmc needs an rng (or resume_from)")
    return _run_chain(problem, config, rng, trans_dimensional=True, start_state=init_state)


# ---------------------------------------------------------------------------
# checkpointing (single JSON document, atomically replaced)
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = "1.0"


def _save_checkpoint(path, problem, config, state, rng, recorder, trace, scales, counters):
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "t_max": config.t_max,
        "state": {
            "bits": state.structure.bits(),
            "target": state.structure.target,
            "n_groups": problem.n_groups,
            "lam": state.lam.tolist(),
            "betas": state.betas.tolist(),
            "sigma": state.sigma.tolist(),
            "alpha": state.alpha,
            "W": None if state.W is None else [w.tolist() for w in state.W],
        },
        "rng_state": rng.bit_generator.state,
        "scales": {"sigma0": scales.sigma0, "eps": scales.eps, "adapt": scales.adapt,
                   "target_rate": scales.target_rate, "window": scales.window},
        "adapt_counters": list(counters),
        "trace": {
            "iterations": recorder.iterations,
            "structures": recorder.structures,
            "sigma": None if recorder.sigma is None else [s.tolist() for s in recorder.sigma],
            "alpha": recorder.alpha,
            "W": None
            if recorder.W is None
            else [[w.tolist() for w in ws] for ws in recorder.W],
            "move_stats": trace.move_stats,
            "numerical_rejects": trace.numerical_rejects,
            "scales_history": trace.scales_history,
        },
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def _load_checkpoint(path, problem, config):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise UsageError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    s = doc["state"]
    if s["n_groups"] != problem.n_groups or s["target"] != problem.structure.target:
        raise UsageError("checkpoint does not match this problem")
    structure = structure_from_bits(s["bits"], s["n_groups"], s["target"])
    state = ChainState(
        structure=structure,
        lam=np.asarray(s["lam"]),
        betas=np.asarray(s["betas"]),
        sigma=np.asarray(s["sigma"]),
        alpha=float(s["alpha"]),
        W=None if s["W"] is None else [np.asarray(w) for w in s["W"]],
        iteration=int(doc["iteration"]),
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng_state"]
    sc = doc["scales"]
    scales = ProposalScales(
        sigma0=sc["sigma0"], eps=sc["eps"], adapt=sc["adapt"],
        target_rate=sc["target_rate"], window=sc["window"],
    )
    recorder = _Recorder(problem, config)
    tr = doc["trace"]
    recorder.iterations = list(tr["iterations"])
    recorder.structures = list(tr["structures"])
    if recorder.sigma is not None and tr["sigma"] is not None:
        recorder.sigma = [np.asarray(s) for s in tr["sigma"]]
        recorder.alpha = list(tr["alpha"])
    if recorder.W is not None and tr["W"] is not None:
        recorder.W = [[np.asarray(w) for w in ws] for ws in tr["W"]]
    recorder.refilter(config.burn_in, config.thin)
    trace = ChainTrace(
        target=problem.structure.target,
        n_groups=problem.n_groups,
        t_max=config.t_max,
        burn_in=config.burn_in,
        thin=config.thin,
        move_stats={k: list(v) for k, v in tr["move_stats"].items()},
        numerical_rejects=tr["numerical_rejects"],
        scales_history=[tuple(x) for x in tr["scales_history"]],
        final_scales=scales,
    )
    return state, rng, recorder, trace, scales, tuple(doc["adapt_counters"])
