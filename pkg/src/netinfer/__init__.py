"""Sparse network topology and dynamics inference from time series.

Partially observed linear networks are modeled non-parametrically through
truncated impulse responses with stability-inducing kernel priors; the
posterior over parent sets and dynamics is explored by a reversible-jump
MCMC sampler, with a kernel empirical-Bayes optimizer as the baseline.
"""

from .accel import BACKEND
from .bayes import (
    HyperParams,
    conditional_sigma_posterior,
    conditional_W_posterior,
    log_alpha_conditional,
    log_beta_prior,
    log_lambda_prior,
    log_likelihood,
    log_marginal,
    log_structure_prior,
)
from .benchgen import (
    BenchmarkProtocol,
    GroundTruthNetwork,
    SimulationConfig,
    generate_random_network,
    generate_ring_network,
    run_monte_carlo,
    score_topology,
    simulate,
)
from .data import (
    ModelStructure,
    RegressionProblem,
    TimeSeriesExperiment,
    build_regression,
    enumerate_structures,
    full_structure,
    structure_space_size,
)
from .errors import (
    DataTooShortError,
    NetinferError,
    NumericalError,
    ParameterDomainError,
    UniverseMismatchError,
    UsageError,
)
from .exact import enumerated_structure_posterior
from .infer import InferenceConfig, NetworkResult, infer_network, infer_target
from .keb import KEBOptions, KEBResult, keb_link_confidence, keb_objective, keb_optimize
from .kernels import (
    BlockCovariance,
    KernelConfig,
    assemble_block_covariance,
    eval_kernel,
    gram_matrix,
)
from .proposals import (
    ProposalScales,
    adapt_scales,
    birth_proposal_draw,
    propose_alpha,
    propose_beta,
    propose_lambda,
    truncnorm_logpdf,
    truncnorm_sample,
)
from .sampler import (
    ChainConfig,
    ChainState,
    ChainTrace,
    FrozenHyper,
    alpha_move,
    birth_move,
    death_move,
    gibbs_W_sigma,
    move_probabilities,
    run_fixed_topology,
    run_rjmcmc,
    update_move,
)
from .summary import (
    PosteriorSummary,
    empirical_structure_distribution,
    fitness,
    link_probabilities,
    map_topology,
    posterior_means,
    predict_one_step,
    summarize_trace,
)

__version__ = "0.1.0"
