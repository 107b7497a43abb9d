"""Compiled vs pure-Python kernels: Kalman likelihood, RTS smoother and
marching squares.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from formphase import kernels


def cases(rng):
    t = np.arange(2000) * 0.01
    y = np.sin(3 * t) + 0.05 * rng.standard_normal(t.size)
    many = [y[i:i + 100] for i in range(0, 2000, 100)]
    u = np.linspace(-2, 2, 201)
    X, Y = np.meshgrid(u, u)
    F = np.sin(3 * np.arctan2(X, Y) - 2 * np.hypot(X, Y))
    args = (0.01, 1e-4, 1e-1, 2.5e-3, 1.0, 10.0)
    return {
        "kalman_loglik (1 x 2000)":
            lambda b: kernels.kalman_loglik_many([y], *args, backend=b),
        "kalman_loglik (20 x 100)":
            lambda b: kernels.kalman_loglik_many(many, *args, backend=b),
        "kalman_smooth (2000)":
            lambda b: kernels.kalman_smooth(y, *args, backend=b),
        "marching_squares (201 x 201)":
            lambda b: kernels.marching_squares(F, 0.0, backend=b),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    backends = ["python"]
    if kernels.BACKEND == "compiled":
        backends.insert(0, "compiled")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s}" + "".join(f"{b:>14s}" for b in backends)
          + ("    speedup" if len(backends) == 2 else ""))
    for name, fn in cases(rng).items():
        times = []
        for b in backends:
            fn(b)
            n = max(1, int(0.2 / max(timeit.timeit(lambda: fn(b), number=1),
                                     1e-6)))
            best = min(timeit.repeat(lambda: fn(b), number=n,
                                     repeat=a.repeat)) / n
            times.append(best)
        line = f"{name:32s}" + "".join(f"{1e3 * s:12.3f}ms" for s in times)
        if len(times) == 2:
            line += f"  {times[1] / times[0]:8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
