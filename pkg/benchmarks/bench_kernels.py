"""Benchmark: compiled kernels vs the pure-numpy fallback.

Times the two backends on the raw kernels and on full objective/gradient
evaluations of a steady-state LTI problem, which is the workload that
dominates estimation runs.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

import varsysid._kernels as kernels
from varsysid.data import make_dataset
from varsysid.elbo import elbo_value_and_gradient
from varsysid.gauss_markov import SteadyStateGaussMarkov
from varsysid.model import LtiModel


def timeit(fn, min_time=0.3):
    fn()  # warm up
    reps = 1
    while True:
        start = time.perf_counter()
        for _ in range(reps):
            fn()
        elapsed = time.perf_counter() - start
        if elapsed >= min_time:
            return elapsed / reps
        reps = max(reps * 2, int(reps * min_time / max(elapsed, 1e-9)))


def bench_solve_quad_gram(rng):
    print("\nsolve_quad_gram (m rows, dimension d)")
    print(f"{'m':>8} {'d':>3} {'reference':>12} {'compiled':>12} {'speedup':>8}")
    for m, d in [(200, 2), (2000, 2), (20000, 2), (2000, 4), (20000, 4),
                 (2000, 8)]:
        root = rng.standard_normal((d, d))
        chol = np.linalg.cholesky(root @ root.T + d * np.eye(d))
        x = rng.standard_normal((m, d))
        times = {}
        for name, impl in kernels.get_backends():
            times[name] = timeit(lambda: impl.solve_quad_gram(chol, x))
        _report(f"{m:>8} {d:>3}", times)


def bench_marg_recursions(rng):
    print("\nmarginal recursion forward+backward (n steps, dimension d)")
    print(f"{'n':>8} {'d':>3} {'reference':>12} {'compiled':>12} {'speedup':>8}")
    for n, d in [(200, 2), (2000, 2), (2000, 3)]:
        cond = np.stack([np.eye(d)] * (n + 1))
        cross = 0.3 * rng.standard_normal((n, d, d))
        sbar = rng.standard_normal((n + 1, d, d))
        times = {}
        for name, impl in kernels.get_backends():
            def run(impl=impl):
                margs = impl.marg_forward(cond, cross)
                impl.marg_backward(margs, cross, sbar)
            times[name] = timeit(run)
        _report(f"{n:>8} {d:>3}", times)


def bench_elbo(rng):
    print("\nsteady-state LTI objective + gradient (n samples, nx = 2)")
    print(f"{'n':>8} {'':>3} {'reference':>12} {'compiled':>12} {'speedup':>8}")
    model = LtiModel(
        params=["a11", "a12", "a21", "a22", "b1", "b2", "lg1", "lg2"],
        nx=2, nu=1, ny=2,
        a=[["a11", "a12"], ["a21", "a22"]], b=[["b1"], ["b2"]],
        c=[[1.0, 0.0], [0.0, 1.0]],
        log_diffusion=["lg1", "lg2"], log_meas_std=[-1.6, -1.6])
    theta = np.array([0.0, 1.0, -8.0, -4.0, 0.3, 2.0, -1.2, -0.9])
    for n in (200, 2000, 20000):
        data = make_dataset(0.1, rng.standard_normal((n, 1)),
                            rng.standard_normal((n, 2)))
        q = SteadyStateGaussMarkov(rng.standard_normal((n, 2)),
                                   np.eye(2), 0.3 * np.eye(2))
        times = {}
        original = kernels._IMPL
        try:
            for name, impl in kernels.get_backends():
                kernels._IMPL = impl
                times[name] = timeit(
                    lambda: elbo_value_and_gradient(model, data, q, theta))
        finally:
            kernels._IMPL = original
        _report(f"{n:>8} {'':>3}", times)


def _report(label, times):
    ref = times["reference"]
    cmp_ = times.get("compiled")
    if cmp_ is None:
        print(f"{label} {ref * 1e6:>10.1f}us {'n/a':>12} {'n/a':>8}")
    else:
        print(f"{label} {ref * 1e6:>10.1f}us {cmp_ * 1e6:>10.1f}us "
              f"{ref / cmp_:>7.2f}x")


def main():
    print(f"active backend: {kernels.backend_name}")
    rng = np.random.default_rng(0)
    bench_solve_quad_gram(rng)
    bench_marg_recursions(rng)
    bench_elbo(rng)


if __name__ == "__main__":
    main()
