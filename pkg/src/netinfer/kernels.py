"""Stability-inducing covariance functions for impulse-response groups.

Three families are supported, all enforcing exponentially decaying
(i.e. stable) impulse responses:

* ``tc`` -- tuned/correlated:       k(t,s) = b^max(t,s),  b in (0,1)
* ``dc`` -- diagonal/correlated:    k(t,s) = b1^((t+s)/2) * b2^|t-s|,
  b1 in (0,1), b2 in (-1,1)
* ``ss`` -- second-order stable spline:
  k(t,s) = b^(t+s+max(t,s))/2 - b^(3*max(t,s))/6,  b in (0,1)

Domain boundaries are open and enforced strictly: values within 1e-12 of a
boundary are rejected because the kernels degenerate there.

All functions are pure; concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import ParameterDomainError, UsageError

FAMILIES = ("tc", "dc", "ss")

_FAMILY_CODES = {"tc": accel.FAMILY_TC, "dc": accel.FAMILY_DC, "ss": accel.FAMILY_SS}

#: number of decay hyperparameters per family
BETA_DIM = {"tc": 1, "dc": 2, "ss": 1}

#: open domains per beta component
BETA_DOMAINS = {"tc": ((0.0, 1.0),), "dc": ((0.0, 1.0), (-1.0, 1.0)), "ss": ((0.0, 1.0),)}

_BOUNDARY_MARGIN = 1e-12


def normalize_family(family: str) -> str:
    fam = str(family).lower()
    if fam not in FAMILIES:
        raise UsageError(f"unknown kernel family {family!r}; expected one of {FAMILIES}")
    return fam


def family_code(family: str) -> int:
    return _FAMILY_CODES[normalize_family(family)]


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family plus impulse-response truncation length."""

    family: str
    truncation: int

    def __post_init__(self):
        object.__setattr__(self, "family", normalize_family(self.family))
        if int(self.truncation) != self.truncation or self.truncation < 2:
            raise UsageError(f"truncation must be an integer >= 2, got {self.truncation}")
        object.__setattr__(self, "truncation", int(self.truncation))

    @property
    def beta_dim(self) -> int:
        return BETA_DIM[self.family]


def validate_beta(family: str, beta) -> np.ndarray:
    """Check a beta value against its open domain; return it as a (2,) row.

    The second slot is zero-filled for one-parameter families so that beta
    arrays have a uniform (M, 2) layout throughout the package.
    """
    fam = normalize_family(family)
    arr = np.atleast_1d(np.asarray(beta, dtype=np.float64)).ravel()
    dim = BETA_DIM[fam]
    if arr.shape[0] != dim:
        raise ParameterDomainError(
            f"{fam} kernel expects {dim} beta component(s), got {arr.shape[0]}"
        )
    for comp, (lo, hi) in zip(arr, BETA_DOMAINS[fam]):
        if not np.isfinite(comp) or comp <= lo + _BOUNDARY_MARGIN or comp >= hi - _BOUNDARY_MARGIN:
            raise ParameterDomainError(
                f"beta component {comp!r} outside open domain ({lo}, {hi}) for {fam}"
            )
    out = np.zeros(2)
    out[:dim] = arr
    return out


def beta_in_domain(family: str, beta) -> bool:
    """Non-raising domain check (used by priors that return -inf instead)."""
    try:
        validate_beta(family, beta)
    except ParameterDomainError:
        return False
    return True


def eval_kernel(family: str, t: int, s: int, beta) -> float:
    """Evaluate one covariance entry k(t, s; beta) at integer lags >= 1."""
    fam = normalize_family(family)
    if t < 1 or s < 1:
        raise UsageError(f"kernel arguments must satisfy t,s >= 1, got ({t}, {s})")
    b = validate_beta(fam, beta)
    m = max(t, s)
    if fam == "tc":
        return float(b[0] ** m)
    if fam == "dc":
        return float(b[0] ** ((t + s) / 2.0) * b[1] ** abs(t - s))
    return float(b[0] ** (t + s + m) / 2.0 - b[0] ** (3 * m) / 6.0)


def gram_matrix(family: str, T: int, beta) -> np.ndarray:
    """Dense T x T kernel matrix [k(t, s; beta)] for t, s = 1..T."""
    fam = normalize_family(family)
    if T < 1:
        raise UsageError("T must be >= 1")
    b = validate_beta(fam, beta)
    return np.asarray(accel.gram(_FAMILY_CODES[fam], int(T), b[0], b[1]))


@dataclass(frozen=True)
class BlockCovariance:
    """Scaled block-diagonal prior covariance blkdiag{lam_i * K_i}."""

    blocks: tuple
    scales: np.ndarray

    def dense(self) -> np.ndarray:
        sizes = [K.shape[0] for K in self.blocks]
        d = int(np.sum(sizes))
        out = np.zeros((d, d))
        pos = 0
        for lam_i, K in zip(self.scales, self.blocks):
            n = K.shape[0]
            out[pos : pos + n, pos : pos + n] = lam_i * K
            pos += n
        return out


def assemble_block_covariance(lam, Ks) -> BlockCovariance:
    """Pair nonnegative scales with kernel blocks."""
    scales = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    blocks = tuple(np.asarray(K, dtype=np.float64) for K in Ks)
    if scales.shape[0] != len(blocks):
        raise UsageError(f"{scales.shape[0]} scales for {len(blocks)} blocks")
    if np.any(scales < 0):
        raise UsageError("scales must be nonnegative")
    for K in blocks:
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise UsageError("kernel blocks must be square matrices")
    return BlockCovariance(blocks=blocks, scales=scales)


def as_beta_array(family: str, betas, m: int) -> np.ndarray:
    """Validate a per-group beta collection and stack it as an (m, 2) array."""
    fam = normalize_family(family)
    arr = np.asarray(betas, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # one value per group for 1-d families, one group's pair for dc
        if BETA_DIM[fam] == 1:
            arr = arr.reshape(-1, 1)
        else:
            arr = arr.reshape(1, 2)
    if arr.shape[0] != m:
        raise UsageError(f"expected {m} beta rows, got {arr.shape[0]}")
    out = np.zeros((m, 2))
    for i in range(m):
        out[i] = validate_beta(fam, arr[i, : BETA_DIM[fam]])
    return out


def block_factor(cfg: KernelConfig, lam, betas) -> np.ndarray:
    """(M, T, T) lower Cholesky factors of lam_i * K_i (zero block if lam_i=0)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if np.any(lam < 0):
        raise ParameterDomainError("lambda scales must be nonnegative")
    b = as_beta_array(cfg.family, betas, lam.shape[0])
    return accel.block_cholesky(_FAMILY_CODES[cfg.family], cfg.truncation, lam, b)
