"""Time the numba-compiled hot kernels against the pure-numpy path.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from realbulk import _kernels


def _time(fn, *args, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_mu_chain(n=64, steps=50_000):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((n, n))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    tangent = rng.standard_normal((steps, n))
    angles = rng.standard_normal(steps)
    logu = np.log(rng.uniform(size=steps))
    adapt = np.arange(steps) < 10_000
    draws = np.empty((steps - 10_000, n))
    args = (a, v.copy(), 80.0, 0.3, tangent, angles, logu, adapt, draws, 1)
    _kernels.mu_chain(a, v.copy(), 80.0, 0.3, tangent[:200], angles[:200],
                      logu[:200], adapt[:200], draws[:190], 1)  # warm the JIT
    t_jit = _time(lambda: _kernels.mu_chain(*args))
    t_py = _time(lambda: _kernels.mu_chain_py(*args), repeat=1)
    return "mu_chain", n, steps, t_py, t_jit


def bench_nu_chain(n=64, steps=50_000):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((n, n))
    v = np.linalg.qr(rng.standard_normal((n, 2)))[0]
    pairs = rng.integers(0, n, size=(steps, 2)).astype(np.int64)
    pairs[:, 1] = (pairs[:, 0] + 1 + pairs[:, 1] % (n - 1)) % n
    angles = rng.standard_normal(steps)
    logu = np.log(rng.uniform(size=steps))
    adapt = np.arange(steps) < 10_000
    draws = np.empty((steps - 10_000, n, 2))
    args = (x, v.copy(), 80.0, 0.3, 0.1, 0.5, -0.4, 0.1, pairs, angles, logu,
            adapt, draws, 1)
    _kernels.nu_chain(x, v.copy(), 80.0, 0.3, 0.1, 0.5, -0.4, 0.1, pairs[:200],
                      angles[:200], logu[:200], adapt[:200], draws[:190], 1)
    t_jit = _time(lambda: _kernels.nu_chain(*args))
    t_py = _time(lambda: _kernels.nu_chain_py(*args), repeat=1)
    return "nu_chain", n, steps, t_py, t_jit


def bench_pfaffian(dim=16, count=20_000):
    rng = np.random.default_rng(2)
    a = rng.standard_normal((count, dim, dim)) + 1j * rng.standard_normal(
        (count, dim, dim)
    )
    mats = a - np.transpose(a, (0, 2, 1))
    _kernels.pfaffian_batch(mats[:10].copy())
    t_jit = _time(lambda: _kernels.pfaffian_batch(mats.copy()))
    t_py = _time(lambda: _kernels.pfaffian_batch_py(mats[:2000].copy()), repeat=1)
    t_py *= count / 2000.0
    return f"pfaffian_batch({dim})", dim, count, t_py, t_jit


def main():
    print(f"numba JIT enabled: {_kernels.JIT_ENABLED} "
          f"(set REALBULK_NO_NUMBA=1 to disable)")
    print(f"{'kernel':<22}{'size':>6}{'work':>9}{'numpy [s]':>12}{'jit [s]':>10}"
          f"{'speedup':>9}")
    for bench in (bench_mu_chain, bench_nu_chain, bench_pfaffian):
        name, size, work, t_py, t_jit = bench()
        print(f"{name:<22}{size:>6}{work:>9}{t_py:>12.3f}{t_jit:>10.3f}"
              f"{t_py / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
