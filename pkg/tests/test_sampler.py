import os

import numpy as np
import pytest
import scipy.stats

from netinfer.bayes import log_lambda_prior, log_marginal, log_structure_prior
from netinfer.data import ModelStructure, build_regression, full_structure, structure_from_bits
from netinfer.errors import UsageError
from netinfer.exact import enumerated_structure_posterior
from netinfer.kernels import KernelConfig
from netinfer.proposals import ProposalScales
from netinfer.sampler import (
    ChainConfig,
    ChainState,
    FrozenHyper,
    alpha_log_ratio,
    alpha_move,
    birth_log_ratio,
    birth_move,
    death_move,
    gibbs_W_sigma,
    move_probabilities,
    run_fixed_topology,
    run_rjmcmc,
    update_log_ratio,
)
from netinfer.summary import empirical_structure_distribution

from conftest import small_experiment


def _tv(emp, exact):
    keys = set(emp) | set(exact)
    return 0.5 * sum(abs(emp.get(k, 0.0) - exact.get(k, 0.0)) for k in keys)


def _small(seed=5, T=5):
    exp = small_experiment(seed=seed)
    return build_regression([exp], full_structure(2, 1, 0), T), KernelConfig("tc", T)


def test_move_probabilities_schedule():
    for m1 in range(1, 8):
        for mk in range(1, m1 + 1):
            pb, pd = move_probabilities(mk, m1)
            pu = 1.0 - pb - pd
            assert pb + pd + pu == pytest.approx(1.0, abs=0)
            assert pu >= 0
            if mk == m1:
                assert pb == 0.0
            if mk == 1:
                assert pd == 0.0
            if 1 < mk < m1:
                assert (pb, pd) == (0.3, 0.3)
    assert move_probabilities(1, 1) == (0.0, 0.0)
    assert move_probabilities(1, 3) == (0.6, 0.0)
    assert move_probabilities(3, 3) == (0.0, 0.6)
    with pytest.raises(UsageError):
        move_probabilities(0, 3)


def test_update_ratio_identity_at_current_state():
    prob, cfg = _small()
    lam = np.array([1.0, 0.5, 2.0])
    betas = np.tile([0.6, 0.0], (3, 1))
    log_r = update_log_ratio(
        prob, cfg, prob.structure, lam, betas, lam.copy(), betas.copy(), [0.3]
    )
    assert log_r == 0.0


def test_update_ratio_two_sided_oracle():
    # log r_U must equal the posterior difference plus the proposal correction
    prob, cfg = _small()
    rng = np.random.default_rng(17)
    for _ in range(10):
        lam_t = rng.uniform(0.05, 2.0, size=3)
        lam_p = rng.uniform(0.05, 2.0, size=3)
        bt = np.column_stack([rng.uniform(0.2, 0.9, size=3), np.zeros(3)])
        bp = np.column_stack([rng.uniform(0.2, 0.9, size=3), np.zeros(3)])
        sigma = [0.4]
        logq_net = rng.normal() * 0.1
        got = update_log_ratio(prob, cfg, prob.structure, lam_t, bt, lam_p, bp, sigma, logq_net)
        want = (
            log_marginal(prob, lam_p, bp, sigma, cfg)
            + log_lambda_prior(lam_p)
            - log_marginal(prob, lam_t, bt, sigma, cfg)
            - log_lambda_prior(lam_t)
            + logq_net
        )
        assert got == pytest.approx(want, rel=1e-8)


def test_update_ratio_penalizes_huge_scale_on_pure_noise():
    rng = np.random.default_rng(3)
    from netinfer.data import TimeSeriesExperiment

    exp = TimeSeriesExperiment(nodes=rng.normal(size=(1, 60)), inputs=np.zeros((0, 60)))
    prob = build_regression([exp], full_structure(1, 0, 0), 5)
    cfg = KernelConfig("tc", 5)
    lam_t, lam_p = np.array([0.1]), np.array([500.0])
    betas = np.array([[0.6, 0.0]])
    log_r = update_log_ratio(prob, cfg, prob.structure, lam_t, betas, lam_p, betas, [1.0])
    assert log_r < 0


def test_birth_death_reciprocity_thousand_pairs():
    prob, cfg = _small()
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(1000):
        bits_small = int(rng.integers(0, 4)) * 2 + 1  # any structure containing group 0
        small = structure_from_bits(bits_small, 3, 0)
        absent = [g for g in range(3) if not small.parents[g]]
        if not absent:
            continue
        g = absent[int(rng.integers(len(absent)))]
        big = small.with_group(g)
        lam_s = rng.uniform(0.05, 3.0, size=small.m_links)
        lam_b = np.insert(lam_s, big.active.index(g), rng.uniform(0.05, 3.0))
        bs = np.column_stack([rng.uniform(0.2, 0.9, size=small.m_links), np.zeros(small.m_links)])
        bb = np.insert(bs, big.active.index(g), [rng.uniform(0.2, 0.9), 0.0], axis=0)
        sigma = [rng.uniform(0.1, 2.0)]
        alpha = rng.uniform(0.2, 5.0)
        log_rb = birth_log_ratio(prob, cfg, small, lam_s, bs, big, lam_b, bb, sigma, alpha)
        log_rd = -birth_log_ratio(prob, cfg, small, lam_s, bs, big, lam_b, bb, sigma, alpha)
        worst = max(worst, abs(log_rb + log_rd))
    assert worst <= 1e-12


def test_birth_ratio_against_first_principles():
    # r_B == posterior ratio x reverse/forward proposal probabilities
    prob, cfg = _small()
    rng = np.random.default_rng(5)
    small = structure_from_bits(0b001, 3, 0)
    big = small.with_group(2)
    lam_s = np.array([0.7])
    lam_b = np.array([0.7, 1.4])
    bs = np.array([[0.6, 0.0]])
    bb = np.array([[0.6, 0.0], [0.4, 0.0]])
    sigma = [0.5]
    alpha = 1.3
    got = birth_log_ratio(prob, cfg, small, lam_s, bs, big, lam_b, bb, sigma, alpha)
    ml_ratio = log_marginal(prob.subset(big), lam_b, bb, sigma, cfg) - log_marginal(
        prob.subset(small), lam_s, bs, sigma, cfg
    )
    prior_ratio = log_structure_prior(2, alpha, 2, 1) - log_structure_prior(1, alpha, 2, 1)
    pb_small = move_probabilities(1, 3)[0]
    pd_big = move_probabilities(2, 3)[1]
    q_fwd = 1.0 / 2.0  # two absent groups to pick from
    q_rev = 1.0 / 1.0  # one removable group in the bigger structure
    want = ml_ratio + prior_ratio + np.log(pd_big * q_rev) - np.log(pb_small * q_fwd)
    assert got == pytest.approx(want, rel=1e-10)


def test_birth_ratio_zero_scale_limit():
    # a newborn group with lambda -> 0 leaves the marginal ratio at 1
    prob, cfg = _small()
    small = structure_from_bits(0b001, 3, 0)
    big = small.with_group(1)
    lam_s = np.array([0.8])
    bs = np.array([[0.5, 0.0]])
    sigma, alpha = [0.4], 1.0
    got = birth_log_ratio(
        prob, cfg, small, lam_s, bs, big, np.array([0.8, 0.0]), np.tile([0.5, 0.0], (2, 1)),
        sigma, alpha,
    )
    m1, mk_t, mk_p = 3, 1, 2
    want = (
        np.log(move_probabilities(mk_p, m1)[1]) - np.log(move_probabilities(mk_t, m1)[0])
        + np.log(alpha) + np.log(m1 - mk_t) - np.log(mk_p) - np.log(mk_p - 1)
    )
    assert got == pytest.approx(want, abs=1e-12)


def test_death_move_never_removes_self():
    prob, cfg = _small()
    rng = np.random.default_rng(1)
    state = ChainState(
        structure=prob.structure,
        lam=np.array([1.0, 1.0, 1.0]),
        betas=np.tile([0.5, 0.0], (3, 1)),
        sigma=np.array([0.5]),
        alpha=1.0,
    )
    for _ in range(300):
        new_state, _, _ = death_move(state, prob, cfg, rng)
        assert new_state.structure.parents[0]


def test_birth_move_at_full_structure_is_hard_error():
    prob, cfg = _small()
    state = ChainState(
        structure=prob.structure,
        lam=np.ones(3),
        betas=np.tile([0.5, 0.0], (3, 1)),
        sigma=np.array([0.5]),
        alpha=1.0,
    )
    with pytest.raises(UsageError):
        birth_move(state, prob, cfg, np.random.default_rng(0))


def test_death_move_at_single_link_is_hard_error():
    prob, cfg = _small()
    state = ChainState(
        structure=structure_from_bits(0b001, 3, 0),
        lam=np.ones(1),
        betas=np.array([[0.5, 0.0]]),
        sigma=np.array([0.5]),
        alpha=1.0,
    )
    with pytest.raises(UsageError):
        death_move(state, prob, cfg, np.random.default_rng(0))


def test_alpha_move_identity_and_full_ratio():
    m1 = 3
    assert alpha_log_ratio(1.7, 1.7, m1) == 0.0
    # the Z-ratio shortcut equals the full MH ratio with the Gamma proposal
    from netinfer.bayes import log_alpha_conditional

    rng = np.random.default_rng(0)
    for _ in range(20):
        a_t, a_p = rng.uniform(0.1, 5.0, size=2)
        mk = int(rng.integers(1, m1 + 1))
        got = alpha_log_ratio(a_t, a_p, m1)
        q = scipy.stats.gamma(a=0.1 + mk, scale=1.0 / 2.0)
        want = (
            log_alpha_conditional(a_p, mk, m1, 0)
            - log_alpha_conditional(a_t, mk, m1, 0)
            + q.logpdf(a_t)
            - q.logpdf(a_p)
        )
        assert got == pytest.approx(want, abs=1e-10)


def test_alpha_chain_matches_quadrature_mean():
    # alpha sampled alone must reproduce its conditional's mean
    from netinfer.bayes import log_alpha_conditional

    m1, mk = 3, 2
    state = ChainState(
        structure=structure_from_bits(0b011, 3, 0),
        lam=np.ones(2),
        betas=np.tile([0.5, 0.0], (2, 1)),
        sigma=np.array([0.5]),
        alpha=1.0,
    )
    rng = np.random.default_rng(77)
    draws = []
    for _ in range(20000):
        state, _ = alpha_move(state, rng, m1, 0)
        draws.append(state.alpha)
    draws = np.asarray(draws[2000:])
    grid = np.linspace(1e-6, 40, 40001)
    dens = np.exp([log_alpha_conditional(a, mk, m1, 0) for a in grid])
    dens /= np.trapezoid(dens, grid)
    mean = np.trapezoid(grid * dens, grid)
    # independence sampler: effective size close to n
    se = draws.std(ddof=1) / np.sqrt(len(draws) / 5.0)
    assert abs(draws.mean() - mean) < 3 * se


def test_gibbs_prior_recovery_phi_zero():
    from netinfer.data import TimeSeriesExperiment
    from netinfer.kernels import gram_matrix

    exp = TimeSeriesExperiment(nodes=np.zeros((1, 40)), inputs=np.zeros((0, 40)))
    prob = build_regression([exp], full_structure(1, 0, 0), 3)
    cfg = KernelConfig("tc", 3)
    lam, beta = np.array([1.2]), 0.6
    state = ChainState(
        structure=prob.structure, lam=lam, betas=np.array([[beta, 0.0]]),
        sigma=np.array([0.7]), alpha=1.0,
    )
    rng = np.random.default_rng(4)
    draws = np.array([
        gibbs_W_sigma(state, prob, cfg, rng, sample_sigma=False).W[0] for _ in range(10**4)
    ])
    K = lam[0] * gram_matrix("tc", 3, beta)
    emp = np.cov(draws.T)
    assert np.linalg.norm(emp - K) / np.linalg.norm(K) < 0.05


def test_gibbs_zero_scale_component_exactly_zero(tc5, small_problem):
    state = ChainState(
        structure=small_problem.structure,
        lam=np.array([1.0, 0.0, 0.5]),
        betas=np.tile([0.5, 0.0], (3, 1)),
        sigma=np.array([0.5]),
        alpha=1.0,
    )
    out = gibbs_W_sigma(state, small_problem, tc5, np.random.default_rng(0))
    T = small_problem.T
    assert np.array_equal(out.W[0][T : 2 * T], np.zeros(T))


def test_fixed_topology_conjugate_w_mean(tc5, small_problem):
    # frozen (beta, lambda, sigma): W draws are iid from the exact posterior
    from netinfer.bayes import conditional_W_posterior

    lam = np.array([1.0, 0.6, 1.5])
    betas = np.tile([0.6, 0.0], (3, 1))
    sigma = np.array([0.4])
    cfgc = ChainConfig(
        kernel=tc5, t_max=10000, burn_in=0, sample_beta_lambda=False,
        sample_sigma=False, sample_alpha=False,
    )
    rng = np.random.default_rng(123)
    state0 = ChainState(
        structure=small_problem.structure, lam=lam, betas=betas, sigma=sigma, alpha=1.0
    )
    trace = run_fixed_topology(small_problem, small_problem.structure, cfgc, rng, init_state=state0)
    posts = conditional_W_posterior(small_problem, lam, betas, sigma, tc5)
    draws = np.array([w[0] for w in trace.W])
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    err = np.abs(draws.mean(axis=0) - posts[0].mu)
    assert np.all(err < 3.5 * np.maximum(se, 1e-12))


def test_trace_length_bookkeeping(tc5, small_problem):
    cfgc = ChainConfig(kernel=tc5, t_max=500, burn_in=100, thin=4)
    trace = run_rjmcmc(small_problem, cfgc, np.random.default_rng(0))
    assert trace.n_stored == (500 - 100) // 4
    for k, (att, acc) in trace.move_stats.items():
        assert acc <= att


def test_update_acceptance_lands_near_target():
    # informative data: the marginal posterior is sharp, so un-adapted walks
    # start far from the 40% target and adaptation pulls them into band
    exp = small_experiment(seed=21, length=300, snr=20.0)
    prob = build_regression([exp], full_structure(2, 1, 0), 5)
    cfgc = ChainConfig(
        kernel=KernelConfig("tc", 5), t_max=6000, burn_in=3000,
        scales=ProposalScales(window=50),
    )
    trace = run_rjmcmc(prob, cfgc, np.random.default_rng(11))
    rate = trace.acceptance_rate("update")
    assert 0.2 < rate < 0.6


def test_no_adaptation_after_burn_in(tc5, small_problem):
    cfgc = ChainConfig(kernel=tc5, t_max=2000, burn_in=500, scales=ProposalScales(window=25))
    trace = run_rjmcmc(small_problem, cfgc, np.random.default_rng(2))
    assert trace.scales_history
    assert all(t <= 500 for t, *_ in trace.scales_history)


def test_chain_determinism(tc5, small_problem):
    cfgc = ChainConfig(kernel=tc5, t_max=800, burn_in=200, debug_validate=True)
    a = run_rjmcmc(small_problem, cfgc, np.random.default_rng(321))
    b = run_rjmcmc(small_problem, cfgc, np.random.default_rng(321))
    assert np.array_equal(a.structures, b.structures)
    assert np.array_equal(a.sigma, b.sigma)
    assert np.array_equal(a.alpha, b.alpha)
    for wa, wb in zip(a.W, b.W):
        for x, y in zip(wa, wb):
            assert np.array_equal(x, y)


def test_frozen_two_structure_problem_matches_enumeration():
    from netinfer.benchgen import GroundTruthNetwork, SimulationConfig, dsf_adjacency, simulate

    A = np.array([[0.6, 0.2], [0.0, 0.3]])
    B = np.zeros((2, 0))
    node_adj, input_adj = dsf_adjacency(A, np.zeros((2, 1)), 2)
    net = GroundTruthNetwork(A=A, B=np.zeros((2, 1)), measured=2,
                             node_adjacency=node_adj, input_adjacency=input_adj)
    rng = np.random.default_rng(5)
    exp = simulate(net, SimulationConfig(length=40, snr="purenoise"), rng)
    prob = build_regression([exp], full_structure(2, 0, 0), 4)
    cfg = KernelConfig("tc", 4)
    lam_full = np.array([0.8, 1.1])
    betas_full = np.tile([0.6, 0.0], (2, 1))
    fz = FrozenHyper(lam=lam_full, betas=betas_full, sigma=np.array([0.5]), alpha=1.0)
    cc = ChainConfig(kernel=cfg, t_max=60000, burn_in=2000, freeze=fz, store_w=False)
    trace = run_rjmcmc(prob, cc, np.random.default_rng(10))
    emp = empirical_structure_distribution(trace)
    exact = enumerated_structure_posterior(prob, lam_full, betas_full, [0.5], 1.0, cfg)
    assert _tv(emp, exact) < 0.03


def test_single_candidate_chain_matches_fixed_topology_distribution(tc5):
    # M1 = 1 degenerates to the fixed-topology sampler (same distribution)
    from netinfer.data import TimeSeriesExperiment

    rng = np.random.default_rng(8)
    exp = TimeSeriesExperiment(nodes=rng.normal(size=(1, 50)), inputs=np.zeros((0, 50)))
    prob = build_regression([exp], full_structure(1, 0, 0), 5)
    cfgc = ChainConfig(kernel=tc5, t_max=4000, burn_in=1000)
    tr_rj = run_rjmcmc(prob, cfgc, np.random.default_rng(100))
    tr_fx = run_fixed_topology(prob, prob.structure, cfgc, np.random.default_rng(200))
    stat, pvalue = scipy.stats.ks_2samp(tr_rj.sigma[:, 0], tr_fx.sigma[:, 0])
    assert pvalue > 0.01


def test_checkpoint_resume_bit_exact(tmp_path, tc5, small_problem):
    ckpt = os.path.join(tmp_path, "chain.json")
    cfg_plain = ChainConfig(kernel=tc5, t_max=600, burn_in=100)
    full = run_rjmcmc(small_problem, cfg_plain, np.random.default_rng(55))

    cfg_ck = ChainConfig(
        kernel=tc5, t_max=600, burn_in=100, checkpoint_path=ckpt, checkpoint_every=250
    )
    interrupted = ChainConfig(
        kernel=tc5, t_max=500, burn_in=100, checkpoint_path=ckpt, checkpoint_every=250
    )
    run_rjmcmc(small_problem, interrupted, np.random.default_rng(55))
    assert os.path.exists(ckpt)
    resumed = run_rjmcmc(small_problem, cfg_ck, resume_from=ckpt)
    assert np.array_equal(full.structures, resumed.structures)
    assert np.array_equal(full.sigma, resumed.sigma)
    assert np.array_equal(full.alpha, resumed.alpha)
    for wa, wb in zip(full.W, resumed.W):
        for x, y in zip(wa, wb):
            assert np.array_equal(x, y)


def test_debug_validation_runs(tc5, small_problem):
    cfgc = ChainConfig(kernel=tc5, t_max=50, burn_in=10, debug_validate=True)
    trace = run_rjmcmc(small_problem, cfgc, np.random.default_rng(0))
    assert trace.n_stored == 40
