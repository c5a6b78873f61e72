"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

Everything the samplers touch thousands of times per chain lives here:
covariance (gram) matrices, the block Cholesky factor of the scaled prior
covariance, and the marginal-likelihood / conditional-posterior cores.

Backend selection is controlled by the ``NETINFER_NUMBA`` environment
variable, read once at import time:

* ``auto`` (default) -- use numba if it imports, else numpy;
* ``1`` -- require numba (ImportError if unavailable);
* ``0`` -- force the pure-numpy path.

Both backends are importable side by side (``NUMPY_IMPL`` / ``NUMBA_IMPL``)
so tests can cross-check them and ``benchmarks/bench_accel.py`` can time
them against each other.

Data layout conventions
-----------------------
* ``lam``    -- (M,) nonnegative group scales.
* ``betas``  -- (M, 2) decay hyperparameters; column 1 is ignored for the
  one-parameter families.
* ``cfac``   -- (M, T, T) per-group lower Cholesky factors of
  ``lam[i] * K(betas[i])``; an all-zero block encodes ``lam[i] == 0``
  (the point mass convention for deleted groups).
* ``G``      -- (d, d) Gram matrix ``Phi' Phi`` with ``d = M*T``.
* ``v``      -- (d,) cross vector ``Phi' Y``; ``yty`` the scalar ``Y'Y``.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.linalg

from .errors import NumericalError

FAMILY_TC = 0
FAMILY_DC = 1
FAMILY_SS = 2

# Relative diagonal jitter used on the single factorization retry.
JITTER_REL = 1e-10


def _read_backend_flag() -> str:
    raw = os.environ.get("NETINFER_NUMBA", "auto").strip().lower()
    if raw in ("1", "true", "on", "yes"):
        return "force"
    if raw in ("0", "false", "off", "no"):
        return "off"
    return "auto"


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def _gram_np(code, T, b1, b2):
    t = np.arange(1, T + 1)
    mx = np.maximum(t[:, None], t[None, :])
    if code == FAMILY_TC:
        return b1**mx.astype(np.float64)
    if code == FAMILY_DC:
        dist = np.abs(t[:, None] - t[None, :])
        return b1 ** ((t[:, None] + t[None, :]) / 2.0) * b2**dist
    tp = (t[:, None] + t[None, :] + mx).astype(np.float64)
    return b1**tp / 2.0 - b1 ** (3.0 * mx.astype(np.float64)) / 6.0


def _chol_blocks_np(code, T, lam, betas, jitter):
    M = lam.shape[0]
    cfac = np.zeros((M, T, T))
    for i in range(M):
        if lam[i] <= 0.0:
            continue
        K = _gram_np(code, T, betas[i, 0], betas[i, 1])
        if jitter > 0.0:
            K[np.diag_indices_from(K)] += jitter * np.trace(K) / T
        cfac[i] = np.sqrt(lam[i]) * np.linalg.cholesky(K)
    return cfac


def _dense_factor(cfac):
    M, T, _ = cfac.shape
    C = np.zeros((M * T, M * T))
    for i in range(M):
        C[i * T : (i + 1) * T, i * T : (i + 1) * T] = cfac[i]
    return C


def _marginal_small_np(cfac, G, v, yty, nrows, sigma):
    C = _dense_factor(cfac)
    d = C.shape[0]
    A = C.T @ G @ C / sigma
    A[np.diag_indices(d)] += 1.0
    L = np.linalg.cholesky(A)
    u = C.T @ v
    w = scipy.linalg.solve_triangular(L, u, lower=True)
    logdet = nrows * np.log(sigma) + 2.0 * np.sum(np.log(np.diag(L)))
    quad = (yty - (w @ w) / sigma) / sigma
    return logdet, max(quad, 0.0)


def _marginal_large_np(cfac, Phi, Y, sigma):
    U = Phi @ _dense_factor(cfac)
    S = U @ U.T
    S[np.diag_indices(S.shape[0])] += sigma
    L = np.linalg.cholesky(S)
    z = scipy.linalg.solve_triangular(L, Y, lower=True)
    return 2.0 * np.sum(np.log(np.diag(L))), float(z @ z)


def _posterior_core_np(cfac, G, v, sigma):
    C = _dense_factor(cfac)
    d = C.shape[0]
    A = C.T @ G @ C / sigma
    A[np.diag_indices(d)] += 1.0
    L = np.linalg.cholesky(A)
    u = C.T @ v
    z = scipy.linalg.cho_solve((L, True), u)
    mu = C @ z / sigma
    return L, u, mu


NUMPY_IMPL = {
    "gram": _gram_np,
    "chol_blocks": _chol_blocks_np,
    "marginal_small": _marginal_small_np,
    "marginal_large": _marginal_large_np,
    "posterior_core": _posterior_core_np,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------


def _build_numba_impl():
    import numba

    njit = numba.njit

    @njit(cache=True)
    def gram_nb(code, T, b1, b2):
        K = np.empty((T, T))
        for t in range(1, T + 1):
            for s in range(1, T + 1):
                m = t if t >= s else s
                if code == 0:
                    val = b1**m
                elif code == 1:
                    val = b1 ** (0.5 * (t + s)) * b2 ** abs(t - s)
                else:
                    val = b1 ** (t + s + m) / 2.0 - b1 ** (3 * m) / 6.0
                K[t - 1, s - 1] = val
        return K

    @njit(cache=True)
    def chol_blocks_nb(code, T, lam, betas, jitter):
        M = lam.shape[0]
        cfac = np.zeros((M, T, T))
        for i in range(M):
            if lam[i] <= 0.0:
                continue
            K = gram_nb(code, T, betas[i, 0], betas[i, 1])
            if jitter > 0.0:
                tr = 0.0
                for t in range(T):
                    tr += K[t, t]
                eps = jitter * tr / T
                for t in range(T):
                    K[t, t] += eps
            L = np.linalg.cholesky(K)
            s = np.sqrt(lam[i])
            for a in range(T):
                for b in range(a + 1):
                    cfac[i, a, b] = s * L[a, b]
        return cfac

    @njit(cache=True)
    def _build_A_nb(cfac, G, sigma):
        # A = I + C' G C / sigma with C block-diagonal, blocks lower triangular;
        # inline loops beat per-block BLAS calls at these block sizes
        M = cfac.shape[0]
        T = cfac.shape[1]
        d = M * T
        A = np.eye(d)
        inv_sigma = 1.0 / sigma
        tmp = np.empty((T, T))
        for gi in range(M):
            if cfac[gi, 0, 0] == 0.0:
                continue
            for gj in range(gi, M):
                if cfac[gj, 0, 0] == 0.0:
                    continue
                r0 = gi * T
                c0 = gj * T
                # tmp = G_ij C_j  (C_j[k, c] nonzero for k >= c)
                for a in range(T):
                    for c in range(T):
                        acc = 0.0
                        for k in range(c, T):
                            acc += G[r0 + a, c0 + k] * cfac[gj, k, c]
                        tmp[a, c] = acc
                # blk = C_i' tmp   (C_i[k, a] nonzero for k >= a)
                for a in range(T):
                    for c in range(T):
                        acc = 0.0
                        for k in range(a, T):
                            acc += cfac[gi, k, a] * tmp[k, c]
                        val = acc * inv_sigma
                        A[r0 + a, c0 + c] += val
                        if gj > gi:
                            A[c0 + c, r0 + a] += val
        return A

    @njit(cache=True)
    def _cross_u_nb(cfac, v):
        M = cfac.shape[0]
        T = cfac.shape[1]
        u = np.zeros(M * T)
        for gi in range(M):
            if cfac[gi, 0, 0] == 0.0:
                continue
            for a in range(T):
                acc = 0.0
                for b in range(a, T):
                    # u_i = C_i' v_i; C_i lower triangular
                    acc += cfac[gi, b, a] * v[gi * T + b]
                u[gi * T + a] = acc
        return u

    @njit(cache=True)
    def _forward_solve_nb(L, rhs):
        d = rhs.shape[0]
        w = np.empty(d)
        for i in range(d):
            acc = rhs[i]
            for j in range(i):
                acc -= L[i, j] * w[j]
            w[i] = acc / L[i, i]
        return w

    @njit(cache=True)
    def _backward_solve_nb(L, rhs):
        # solves L' x = rhs with L lower triangular
        d = rhs.shape[0]
        x = np.empty(d)
        for i in range(d - 1, -1, -1):
            acc = rhs[i]
            for j in range(i + 1, d):
                acc -= L[j, i] * x[j]
            x[i] = acc / L[i, i]
        return x

    @njit(cache=True)
    def marginal_small_nb(cfac, G, v, yty, nrows, sigma):
        A = _build_A_nb(cfac, G, sigma)
        L = np.linalg.cholesky(A)
        u = _cross_u_nb(cfac, v)
        w = _forward_solve_nb(L, u)
        ld = nrows * np.log(sigma)
        for i in range(L.shape[0]):
            ld += 2.0 * np.log(L[i, i])
        ww = 0.0
        for i in range(w.shape[0]):
            ww += w[i] * w[i]
        quad = (yty - ww / sigma) / sigma
        if quad < 0.0:
            quad = 0.0
        return ld, quad

    @njit(cache=True)
    def marginal_large_nb(cfac, Phi, Y, sigma):
        M = cfac.shape[0]
        T = cfac.shape[1]
        n = Phi.shape[0]
        d = M * T
        U = np.zeros((n, d))
        for gi in range(M):
            if cfac[gi, 0, 0] == 0.0:
                continue
            c0 = gi * T
            # U block = Phi block @ C_i, C_i lower triangular
            for r in range(n):
                for c in range(T):
                    acc = 0.0
                    for k in range(c, T):
                        acc += Phi[r, c0 + k] * cfac[gi, k, c]
                    U[r, c0 + c] = acc
        S = np.dot(U, np.ascontiguousarray(U.T))
        for i in range(n):
            S[i, i] += sigma
        L = np.linalg.cholesky(S)
        z = _forward_solve_nb(L, Y)
        ld = 0.0
        for i in range(n):
            ld += 2.0 * np.log(L[i, i])
        zz = 0.0
        for i in range(n):
            zz += z[i] * z[i]
        return ld, zz

    @njit(cache=True)
    def _block_mul_nb(cfac, x):
        M = cfac.shape[0]
        T = cfac.shape[1]
        out = np.zeros(M * T)
        for gi in range(M):
            if cfac[gi, 0, 0] == 0.0:
                continue
            for a in range(T):
                acc = 0.0
                for b in range(a + 1):
                    acc += cfac[gi, a, b] * x[gi * T + b]
                out[gi * T + a] = acc
        return out

    @njit(cache=True)
    def posterior_core_nb(cfac, G, v, sigma):
        A = _build_A_nb(cfac, G, sigma)
        L = np.linalg.cholesky(A)
        u = _cross_u_nb(cfac, v)
        w = _forward_solve_nb(L, u)
        z = _backward_solve_nb(L, w)
        mu = _block_mul_nb(cfac, z) / sigma
        return L, u, mu

    return {
        "gram": gram_nb,
        "chol_blocks": chol_blocks_nb,
        "marginal_small": marginal_small_nb,
        "marginal_large": marginal_large_nb,
        "posterior_core": posterior_core_nb,
        "_block_mul": _block_mul_nb,
        "_backward_solve": _backward_solve_nb,
    }


_FLAG = _read_backend_flag()
NUMBA_IMPL = None
if _FLAG in ("auto", "force"):
    try:
        NUMBA_IMPL = _build_numba_impl()
    except ImportError:
        if _FLAG == "force":
            raise

_ACTIVE = NUMBA_IMPL if NUMBA_IMPL is not None else NUMPY_IMPL
BACKEND = "numba" if NUMBA_IMPL is not None else "numpy"

gram = _ACTIVE["gram"]
chol_blocks = _ACTIVE["chol_blocks"]
marginal_small = _ACTIVE["marginal_small"]
marginal_large = _ACTIVE["marginal_large"]
posterior_core = _ACTIVE["posterior_core"]


def block_mul(cfac, x):
    """Multiply the block-diagonal lower factor by a vector."""
    if NUMBA_IMPL is not None:
        return NUMBA_IMPL["_block_mul"](cfac, x)
    M, T, _ = cfac.shape
    out = np.zeros(M * T)
    for i in range(M):
        out[i * T : (i + 1) * T] = cfac[i] @ x[i * T : (i + 1) * T]
    return out


def backward_solve(L, rhs):
    """Solve ``L' x = rhs`` for lower-triangular ``L``."""
    if NUMBA_IMPL is not None:
        return NUMBA_IMPL["_backward_solve"](L, rhs)
    return scipy.linalg.solve_triangular(L, rhs, lower=True, trans="T")


def block_cholesky(code, T, lam, betas):
    """Cholesky factors of ``lam[i] * K_i`` with one jittered retry.

    Kernels are positive semidefinite in exact arithmetic; near-degenerate
    hyperparameters can still break the factorization numerically, in which
    case a relative diagonal jitter is added once before giving up.
    """
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    betas = np.ascontiguousarray(betas, dtype=np.float64)
    try:
        return chol_blocks(code, T, lam, betas, 0.0)
    except np.linalg.LinAlgError:
        pass
    try:
        return chol_blocks(code, T, lam, betas, JITTER_REL)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "kernel block factorization failed after jitter retry",
            detail={"lam": lam.tolist(), "betas": betas.tolist()},
        ) from exc


def warmup():
    """Trigger JIT compilation of every kernel on toy inputs."""
    lam = np.array([1.0, 0.0])
    betas = np.array([[0.5, 0.2], [0.5, 0.0]])
    for code in (FAMILY_TC, FAMILY_DC, FAMILY_SS):
        cfac = block_cholesky(code, 3, lam, betas)
        G = np.eye(6)
        v = np.arange(6.0)
        marginal_small(cfac, G, v, 10.0, 8, 0.5)
        Phi = np.arange(12.0).reshape(2, 6) / 10.0
        marginal_large(cfac, Phi, np.array([1.0, 2.0]), 0.5)
        L, u, mu = posterior_core(cfac, G, v, 0.5)
        block_mul(cfac, backward_solve(L, mu))
