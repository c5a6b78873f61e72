"""Time the numba kernels against the pure-numpy fallback.

Runs every hot kernel on a grid of problem sizes, checks that the two
backends agree numerically, and prints a timing table with speedups.

    python benchmarks/bench_accel.py [--reps 200]

The package-level backend selection (NETINFER_NUMBA) does not matter here;
both implementations are imported explicitly.
"""

import argparse
import time

import numpy as np

from netinfer import accel

if accel.NUMBA_IMPL is None:
    raise SystemExit("numba backend unavailable; nothing to compare")


def _case(rng, M, T, nrows):
    lam = rng.uniform(0.1, 2.0, size=M)
    betas = np.column_stack([rng.uniform(0.3, 0.9, size=M), rng.uniform(-0.5, 0.5, size=M)])
    Phi = rng.normal(size=(nrows, M * T))
    Y = rng.normal(size=nrows)
    G = np.ascontiguousarray(Phi.T @ Phi)
    v = Phi.T @ Y
    return lam, betas, Phi, Y, G, v, float(Y @ Y)


def _time(fn, reps):
    fn()  # warm (JIT + caches)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=200)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    sizes = [(3, 5, 55), (6, 15, 105), (14, 15, 105), (6, 20, 280)]
    rows = []
    for M, T, nrows in sizes:
        lam, betas, Phi, Y, G, v, yty = _case(rng, M, T, nrows)
        sigma = 0.5
        c_np = accel.NUMPY_IMPL["chol_blocks"](accel.FAMILY_TC, T, lam, betas, 0.0)
        c_nb = accel.NUMBA_IMPL["chol_blocks"](accel.FAMILY_TC, T, lam, betas, 0.0)
        assert np.allclose(c_np, c_nb, rtol=1e-12, atol=1e-14)
        checks = {
            "chol_blocks": (
                lambda: accel.NUMPY_IMPL["chol_blocks"](accel.FAMILY_TC, T, lam, betas, 0.0),
                lambda: accel.NUMBA_IMPL["chol_blocks"](accel.FAMILY_TC, T, lam, betas, 0.0),
            ),
            "marginal_small": (
                lambda: accel.NUMPY_IMPL["marginal_small"](c_np, G, v, yty, nrows, sigma),
                lambda: accel.NUMBA_IMPL["marginal_small"](c_nb, G, v, yty, nrows, sigma),
            ),
            "marginal_large": (
                lambda: accel.NUMPY_IMPL["marginal_large"](c_np, Phi, Y, sigma),
                lambda: accel.NUMBA_IMPL["marginal_large"](c_nb, Phi, Y, sigma),
            ),
            "posterior_core": (
                lambda: accel.NUMPY_IMPL["posterior_core"](c_np, G, v, sigma),
                lambda: accel.NUMBA_IMPL["posterior_core"](c_nb, G, v, sigma),
            ),
        }
        a = accel.NUMPY_IMPL["marginal_small"](c_np, G, v, yty, nrows, sigma)
        b = accel.NUMBA_IMPL["marginal_small"](c_nb, G, v, yty, nrows, sigma)
        assert np.allclose(a, b, rtol=1e-8)
        for name, (f_np, f_nb) in checks.items():
            t_np = _time(f_np, args.reps)
            t_nb = _time(f_nb, args.reps)
            rows.append((name, M, T, nrows, t_np * 1e6, t_nb * 1e6, t_np / t_nb))

    print(f"{'kernel':<16}{'M':>4}{'T':>4}{'rows':>6}{'numpy us':>12}{'numba us':>12}{'speedup':>9}")
    for name, M, T, nrows, us_np, us_nb, speed in rows:
        print(f"{name:<16}{M:>4}{T:>4}{nrows:>6}{us_np:>12.1f}{us_nb:>12.1f}{speed:>9.2f}")


if __name__ == "__main__":
    main()
