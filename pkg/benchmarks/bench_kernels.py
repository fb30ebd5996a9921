"""Timing comparison of the numba kernels against their numpy fallbacks.

Run directly:            python benchmarks/bench_kernels.py
Force the numpy path:    SCOREFLOW_DISABLE_NUMBA=1 python benchmarks/bench_kernels.py

The active path is whatever the environment selected at import; the
fallback implementations are always importable, so both are timed in one
process.
"""

import time

import numpy as np

from scoreflow import _kernels
from scoreflow._kernels import (
    USING_NUMBA,
    _kde_numpy,
    _muscl_rhs_numpy,
    _score1d_numpy,
)


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm-up (JIT compile / cache touch)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"active path: {'numba' if USING_NUMBA else 'numpy'}")
    print(f"{'kernel':<28}{'case':<26}{'numpy':>12}{'active':>12}{'speedup':>9}")

    cases = []

    # KDE at metric-evaluation scale
    samples = rng.standard_normal(40_000)
    grid = np.linspace(-10, 10, 2000)
    cases.append(("gaussian_kde_grid", "40k samples x 2k grid",
                  (_kde_numpy, _kernels._kde_impl), (samples, grid, 0.127)))

    # 1D mixture score at ensemble scale
    x = rng.normal(scale=5.0, size=40_000)
    log_w = np.log(np.array([0.1, 0.4, 0.5]))
    means = np.array([-6.0, 4.0, 6.0])
    variances = np.full(3, 0.25)
    cases.append(("mixture_score_1d", "40k particles, 3 modes",
                  (_score1d_numpy, _kernels._score1d_impl), (x, log_w, means, variances)))

    # MUSCL right-hand side at solver scale
    rho = np.abs(rng.normal(size=1000)) + 0.01
    v = rng.normal(size=1001)
    cases.append(("muscl_rhs", "1000 cells",
                  (_muscl_rhs_numpy, _kernels._muscl_impl), (rho, v, 0.02)))

    for name, case, (numpy_fn, active_fn), args in cases:
        t_numpy = timeit(numpy_fn, *args)
        t_active = timeit(active_fn, *args)
        print(f"{name:<28}{case:<26}{t_numpy * 1e3:>10.2f}ms{t_active * 1e3:>10.2f}ms"
              f"{t_numpy / t_active:>8.1f}x")


if __name__ == "__main__":
    main()
