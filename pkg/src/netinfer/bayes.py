"""Log-space evaluation of every density in the hierarchical model.

The hierarchy, per target node:

* responses  Y_j | W_j, sigma_j        Gaussian regression likelihood
* responses  W_j | lam, beta           N(0, blkdiag{lam_i K_i}), iid over j
* noise      sigma_j                   InverseGamma(a0, b0), a0 = b0 = 0.001
* scales     lam_i                     InverseGamma(a1, b1), a1 = 2, b1 = 1
* decays     beta_i                    uniform on the kernel domain
* structure  M_k | alpha               truncated-Poisson variant in the
                                        link count, normalized over all
                                        admissible parent sets
* rate       alpha                     Gamma(a2, b2), a2 = 0.1, b2 = 1

``lam_i = 0`` encodes a deleted group: the matching W block is a point
mass at zero, handled exactly by the zero-block factor convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import gammaln, logsumexp

from . import accel
from .data import RegressionProblem
from .errors import ParameterDomainError, UsageError
from .kernels import BETA_DOMAINS, BETA_DIM, KernelConfig, as_beta_array, block_factor

# fixed prior constants
A0 = B0 = 0.001
A1, B1 = 2.0, 1.0
A2, B2 = 0.1, 1.0


@dataclass
class HyperParams:
    """Hyperparameter bundle carried by one Markov state."""

    lam: np.ndarray
    betas: np.ndarray
    sigma: np.ndarray
    alpha: float

    def __post_init__(self):
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=np.float64))
        self.betas = np.atleast_2d(np.asarray(self.betas, dtype=np.float64))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        if self.betas.shape != (self.lam.shape[0], 2):
            raise UsageError("betas must have shape (len(lam), 2)")
        if np.any(self.lam < 0):
            raise ParameterDomainError("lambda scales must be nonnegative")
        if np.any(self.sigma <= 0):
            raise ParameterDomainError("noise variances must be positive")
        if not self.alpha > 0:
            raise ParameterDomainError("alpha must be positive")

    def copy(self) -> "HyperParams":
        return HyperParams(self.lam.copy(), self.betas.copy(), self.sigma.copy(), float(self.alpha))


# ---------------------------------------------------------------------------
# structure prior and the alpha conditional
# ---------------------------------------------------------------------------


def log_structure_normalizer(alpha: float, m1: int) -> float:
    """log Z(alpha) = log sum over all structures of alpha^{M_i} / M_i!.

    Grouped by link count: structures with c non-self links number
    C(m1-1, c), each contributing alpha^(c+1) / (c+1)!.  Never enumerates.
    """
    if alpha <= 0:
        raise ParameterDomainError("alpha must be positive")
    if m1 < 1:
        raise UsageError("need at least one candidate group")
    c = np.arange(m1)
    terms = (
        gammaln(m1) - gammaln(c + 1) - gammaln(m1 - c)  # log C(m1-1, c)
        + (c + 1) * np.log(alpha)
        - gammaln(c + 2)
    )
    return float(logsumexp(terms))


def log_structure_prior(m_links: int, alpha: float, p: int, m: int) -> float:
    """log p(structure | alpha) for a structure with ``m_links`` links."""
    m1 = p + m
    if not 1 <= m_links <= m1:
        raise UsageError(f"link count {m_links} outside 1..{m1}")
    logz = log_structure_normalizer(alpha, m1)
    return m_links * np.log(alpha) - float(gammaln(m_links + 1)) - logz


def log_alpha_conditional(alpha: float, m_links: int, p: int, m: int) -> float:
    """Unnormalized log conditional of alpha given the current link count."""
    if alpha <= 0:
        raise ParameterDomainError("alpha must be positive")
    return (
        (A2 - 1.0 + m_links) * np.log(alpha)
        - B2 * alpha
        - log_structure_normalizer(alpha, p + m)
    )


# ---------------------------------------------------------------------------
# hyperpriors
# ---------------------------------------------------------------------------


def log_invgamma_pdf(x, a: float, b: float):
    x = np.asarray(x, dtype=np.float64)
    out = np.full(x.shape, -np.inf)
    ok = x > 0
    out[ok] = a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(x[ok]) - b / x[ok]
    return out if out.ndim else float(out)


def log_lambda_prior(lam) -> float:
    """Sum of log IG(lam_i; 2, 1); -inf outside [0, inf) or at lam_i = 0."""
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        return -np.inf
    return float(np.sum(log_invgamma_pdf(lam, A1, B1)))


def log_beta_prior(family: str, betas) -> float:
    """Uniform prior: 0 per group for tc/ss, log(1/2) per group for dc."""
    fam = family.lower()
    arr = np.atleast_2d(np.asarray(betas, dtype=np.float64))
    if arr.shape[1] == 1:
        arr = np.hstack([arr, np.zeros((arr.shape[0], 1))])
    total = 0.0
    for row in arr:
        for comp, (lo, hi) in zip(row[: BETA_DIM[fam]], BETA_DOMAINS[fam]):
            if not lo + 1e-12 < comp < hi - 1e-12:
                return -np.inf
        if fam == "dc":
            total += np.log(0.5)
    return total


# ---------------------------------------------------------------------------
# likelihood and marginal likelihood
# ---------------------------------------------------------------------------


def _check_sigma(sigma, n_experiments: int) -> np.ndarray:
    sig = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    if sig.shape[0] == 1 and n_experiments > 1:
        sig = np.repeat(sig, n_experiments)
    if sig.shape[0] != n_experiments:
        raise UsageError(f"expected {n_experiments} noise variances, got {sig.shape[0]}")
    if np.any(sig <= 0):
        raise ParameterDomainError("noise variances must be positive")
    return sig


def log_likelihood(problem: RegressionProblem, W, sigma) -> float:
    """Gaussian log likelihood sum_j log N(Y_j; Phi_j W_j, sigma_j I)."""
    sig = _check_sigma(sigma, problem.n_experiments)
    total = 0.0
    for j, (Y, Phi) in enumerate(zip(problem.Y, problem.Phi)):
        w = np.asarray(W[j], dtype=np.float64)
        if w.shape[0] != Phi.shape[1]:
            raise UsageError("W group layout does not match the problem")
        r = Y - Phi @ w
        n = Y.shape[0]
        total += -0.5 * n * np.log(2.0 * np.pi * sig[j]) - 0.5 * (r @ r) / sig[j]
    return float(total)


def _factor(problem: RegressionProblem, lam, betas, cfg: KernelConfig) -> np.ndarray:
    if cfg.truncation != problem.T:
        raise UsageError(
            f"kernel truncation {cfg.truncation} != problem truncation {problem.T}"
        )
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if lam.shape[0] != problem.n_groups:
        raise UsageError(f"expected {problem.n_groups} lambda scales, got {lam.shape[0]}")
    return block_factor(cfg, lam, as_beta_array(cfg.family, betas, lam.shape[0]))


def log_marginal(
    problem: RegressionProblem, lam, betas, sigma, cfg: KernelConfig, path: str = "auto"
) -> float:
    """Log marginal likelihood with W integrated out.

    sum_j [ -1/2 log|2 pi (sigma_j I + Phi_j LK Phi_j')|
            -1/2 Y_j' (sigma_j I + Phi_j LK Phi_j')^{-1} Y_j ]

    ``path`` selects the evaluation route: ``small`` works on the
    (T * M_k)-sized system via the determinant/inversion identities,
    ``large`` factorizes the (N_j - T)-sized covariance directly, ``auto``
    picks whichever system is smaller per experiment.
    """
    if path not in ("auto", "small", "large"):
        raise UsageError(f"unknown path {path!r}")
    sig = _check_sigma(sigma, problem.n_experiments)
    cfac = _factor(problem, lam, betas, cfg)
    d = problem.dim
    total = 0.0
    for j in range(problem.n_experiments):
        n = problem.Y[j].shape[0]
        use_small = d < n if path == "auto" else path == "small"
        if use_small:
            ld, quad = accel.marginal_small(
                cfac, problem.grams()[j], problem.cross()[j], float(problem.yty()[j]), n, sig[j]
            )
        else:
            ld, quad = accel.marginal_large(cfac, problem.Phi[j], problem.Y[j], sig[j])
        total += -0.5 * (n * np.log(2.0 * np.pi) + ld + quad)
    return float(total)


# ---------------------------------------------------------------------------
# conditional posteriors
# ---------------------------------------------------------------------------


class GaussianPosterior:
    """Conditional posterior of one experiment's W in factorized form.

    mu is the mean; the covariance is C A^{-1} C' where C is the block
    prior factor and A = I + C' G C / sigma (Cholesky factor ``L``).
    Sampling never inverts LK, so zero-lambda groups come out exactly zero.
    """

    def __init__(self, mu, L, cfac):
        self.mu = mu
        self.L = L
        self.cfac = cfac

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.dim)
        return self.mu + accel.block_mul(self.cfac, accel.backward_solve(self.L, z))

    def cov(self) -> np.ndarray:
        M, T, _ = self.cfac.shape
        C = np.zeros((self.dim, self.dim))
        for i in range(M):
            C[i * T : (i + 1) * T, i * T : (i + 1) * T] = self.cfac[i]
        F = scipy.linalg.solve_triangular(self.L, C.T, lower=True)
        return F.T @ F


def conditional_W_posterior(
    problem: RegressionProblem, lam, betas, sigma, cfg: KernelConfig
) -> list:
    """Per-experiment Gaussian conditional of W given hyperparameters."""
    sig = _check_sigma(sigma, problem.n_experiments)
    cfac = _factor(problem, lam, betas, cfg)
    out = []
    for j in range(problem.n_experiments):
        L, _, mu = accel.posterior_core(cfac, problem.grams()[j], problem.cross()[j], sig[j])
        out.append(GaussianPosterior(mu, L, cfac))
    return out


def conditional_sigma_posterior(problem: RegressionProblem, W) -> tuple:
    """InverseGamma(a_j, b_j) parameters of each experiment's noise variance."""
    a = np.empty(problem.n_experiments)
    b = np.empty(problem.n_experiments)
    for j, (Y, Phi) in enumerate(zip(problem.Y, problem.Phi)):
        w = np.asarray(W[j], dtype=np.float64)
        if w.shape[0] != Phi.shape[1]:
            raise UsageError("W group layout does not match the problem")
        r = Y - Phi @ w
        a[j] = A0 + 0.5 * Y.shape[0]
        b[j] = B0 + 0.5 * float(r @ r)
    return a, b


def sample_invgamma(rng: np.random.Generator, a, b) -> np.ndarray:
    """Draw from InverseGamma(a, b) elementwise (b is the scale numerator)."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    return b / rng.standard_gamma(a)
