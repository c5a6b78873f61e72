"""Proposal distributions for the MH steps, plus the scale controller.

* lambda: independent truncated-Gaussian random walks on (0, inf);
* beta:   windowed-uniform walks, window clamped inside the domain near
  its boundaries (the clamped cases are asymmetric and their exact
  forward/reverse densities are reported, including the -inf case where
  the reverse window cannot reach the starting point);
* birth:  fresh (beta, lambda) drawn from the priors, which is what makes
  the prior and proposal terms cancel in the birth/death ratios;
* alpha:  an independence Gamma proposal matched to the conditional.

Both walk scales target a 40% acceptance rate via a geometric update
applied every ``window`` update-move attempts during burn-in only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .bayes import A1, A2, B1, B2, log_invgamma_pdf
from .errors import ParameterDomainError, UsageError
from .kernels import BETA_DIM, BETA_DOMAINS, normalize_family

_SIGMA0_FLOOR, _SIGMA0_CAP = 1e-6, 1e3
_EPS_FLOOR, _EPS_CAP = 1e-6, 0.9


@dataclass(frozen=True)
class ProposalScales:
    """Walk scales for the update move and their adaptation policy."""

    sigma0: float = 0.05
    eps: float = 0.1
    adapt: bool = True
    target_rate: float = 0.4
    window: int = 100

    def __post_init__(self):
        if self.sigma0 <= 0 or self.eps <= 0:
            raise UsageError("proposal scales must be positive")
        if not 0.0 < self.target_rate < 1.0:
            raise UsageError("target acceptance rate must lie in (0, 1)")


def adapt_scales(n_accepted: int, n_attempted: int, scales: ProposalScales) -> ProposalScales:
    """Geometric nudge of both scales toward the target acceptance rate."""
    if n_attempted <= 0:
        return scales
    rate = n_accepted / n_attempted
    factor = float(np.exp(0.05 * (rate - scales.target_rate)))
    return replace(
        scales,
        sigma0=float(np.clip(scales.sigma0 * factor, _SIGMA0_FLOOR, _SIGMA0_CAP)),
        eps=float(np.clip(scales.eps * factor, _EPS_FLOOR, _EPS_CAP)),
    )


# ---------------------------------------------------------------------------
# truncated Gaussian
# ---------------------------------------------------------------------------


def truncnorm_logpdf(theta: float, mu0: float, sigma0: float, lo: float, hi: float) -> float:
    """Log density of a Gaussian(mu0, sigma0^2) truncated to (lo, hi)."""
    if sigma0 <= 0:
        raise UsageError("sigma0 must be positive")
    if not lo < hi:
        raise UsageError("need lo < hi")
    if not lo < theta < hi:
        return -np.inf
    z = (theta - mu0) / sigma0
    denom = ndtr((hi - mu0) / sigma0) - ndtr((lo - mu0) / sigma0)
    if denom <= 0.0:
        return -np.inf
    return float(-0.5 * np.log(2.0 * np.pi) - 0.5 * z * z - np.log(sigma0) - np.log(denom))


def truncnorm_sample(
    rng: np.random.Generator, mu0: float, sigma0: float, lo: float, hi: float
) -> float:
    """Inverse-CDF draw with a rejection fallback near extreme truncation."""
    if sigma0 <= 0:
        raise UsageError("sigma0 must be positive")
    a = ndtr((lo - mu0) / sigma0)
    b = ndtr((hi - mu0) / sigma0)
    u = rng.uniform()
    x = mu0 + sigma0 * ndtri(a + u * (b - a))
    if lo < x < hi:
        return float(x)
    for _ in range(100):
        x = rng.normal(mu0, sigma0)
        if lo < x < hi:
            return float(x)
    raise ParameterDomainError(
        f"truncated-normal sampling failed for mu0={mu0}, sigma0={sigma0} on ({lo}, {hi})"
    )


def propose_lambda(rng: np.random.Generator, lam_t: np.ndarray, sigma0: float):
    """Componentwise truncated-Gaussian walk on (0, inf).

    Returns (lam_p, logq_forward, logq_reverse); the normalizer asymmetry
    is exactly the erf correction entering the update acceptance ratio.
    """
    lam_t = np.atleast_1d(np.asarray(lam_t, dtype=np.float64))
    if np.any(lam_t < 0):
        raise UsageError("current lambda must be nonnegative")
    lam_p = np.empty_like(lam_t)
    logq_fwd = 0.0
    logq_rev = 0.0
    for i, cur in enumerate(lam_t):
        lam_p[i] = truncnorm_sample(rng, cur, sigma0, 0.0, np.inf)
        logq_fwd += truncnorm_logpdf(lam_p[i], cur, sigma0, 0.0, np.inf)
        logq_rev += truncnorm_logpdf(cur, lam_p[i], sigma0, 0.0, np.inf)
    return lam_p, logq_fwd, logq_rev


# ---------------------------------------------------------------------------
# windowed-uniform beta walk
# ---------------------------------------------------------------------------


def _window(center: float, lo: float, hi: float, eps: float) -> tuple:
    if center <= lo + eps / 2.0:
        return lo, lo + eps
    if center >= hi - eps / 2.0:
        return hi - eps, hi
    return center - eps / 2.0, center + eps / 2.0


def _window_logpdf(x: float, center: float, lo: float, hi: float, eps: float) -> float:
    a, b = _window(center, lo, hi, eps)
    return -np.log(eps) if a < x < b else -np.inf


def propose_beta(rng: np.random.Generator, betas_t: np.ndarray, eps: float, family: str):
    """Windowed-uniform walk per beta component per group.

    Returns (betas_p, logq_forward, logq_reverse).  The two densities agree
    away from the domain boundaries; in a clamped window the walk is
    asymmetric and the reverse density can be -inf (auto-reject).
    """
    fam = normalize_family(family)
    betas_t = np.atleast_2d(np.asarray(betas_t, dtype=np.float64))
    dims = BETA_DIM[fam]
    domains = BETA_DOMAINS[fam]
    betas_p = betas_t.copy()
    logq_fwd = 0.0
    logq_rev = 0.0
    for g in range(betas_t.shape[0]):
        for c in range(dims):
            lo, hi = domains[c]
            cur = betas_t[g, c]
            a, b = _window(cur, lo, hi, eps)
            new = rng.uniform(a, b)
            betas_p[g, c] = new
            logq_fwd += _window_logpdf(new, cur, lo, hi, eps)
            logq_rev += _window_logpdf(cur, new, lo, hi, eps)
    return betas_p, logq_fwd, logq_rev


# ---------------------------------------------------------------------------
# birth and alpha proposals
# ---------------------------------------------------------------------------


def birth_proposal_draw(rng: np.random.Generator, family: str):
    """Draw (beta, lambda) for a newborn group from the hyperpriors.

    Returns (beta_row, lam, log_density); the density equals the prior
    log density, so these terms cancel inside the birth ratio.
    """
    fam = normalize_family(family)
    lam = float(B1 / rng.standard_gamma(A1))
    beta = np.zeros(2)
    logq = float(log_invgamma_pdf(np.array([lam]), A1, B1)[0])
    for c in range(BETA_DIM[fam]):
        lo, hi = BETA_DOMAINS[fam][c]
        beta[c] = rng.uniform(lo, hi)
        logq += -np.log(hi - lo)
    return beta, lam, logq


def propose_alpha(rng: np.random.Generator, m_links: int):
    """Gamma(a2 + M_k, 1 + b2) independence proposal for alpha."""
    if m_links < 1:
        raise UsageError("need at least one link")
    shape = A2 + m_links
    rate = 1.0 + B2
    return float(rng.standard_gamma(shape) / rate), shape, rate
