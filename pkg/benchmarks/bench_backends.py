"""Time the latent-row optimiser and one full fit on each available backend.

Usage::

    python benchmarks/bench_backends.py [--n 300] [--p 50] [--q 25] [--repeats 3]
"""

import argparse
import time

import numpy as np

from sinc import _backend
from sinc.driver import fit_once, initial_precision
from sinc.model import FitConfig
from sinc.synthetic import GraphSpec, generate_dataset


def best_of(repeats, fn):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=300)
    parser.add_argument("--p", type=int, default=50)
    parser.add_argument("--q", type=int, default=25)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    gt = generate_dataset(GraphSpec("random", args.p), args.n, args.q, seed=args.seed)
    X = gt.counts.values.astype(float)
    Z0 = np.log(X + 1.0)
    means = np.broadcast_to(Z0.mean(axis=0), Z0.shape).copy()
    omega = initial_precision(Z0)

    print(f"n={args.n} p={args.p} q={args.q}, best of {args.repeats}")
    print(f"{'backend':<10}{'Z-step (s)':>12}{'fit, 5 iters (s)':>18}")
    results = {}
    for name in sorted(_backend.BACKENDS):
        kernels = _backend.BACKENDS[name]
        z_time, (Z, *_) = best_of(args.repeats,
                                  lambda: kernels.optimize_rows(X, means, omega, Z0))
        cfg = FitConfig(backend=name, max_outer_iters=5)
        fit_time, _ = best_of(args.repeats,
                              lambda: fit_once(gt.counts, gt.covariates, cfg=cfg))
        results[name] = (z_time, fit_time, np.asarray(Z))
        print(f"{name:<10}{z_time:>12.3f}{fit_time:>18.3f}")

    if len(results) == 2:
        zc, fc, Zc = results["compiled"]
        zp, fp, Zp = results["python"]
        print(f"speed-up: Z-step {zp / zc:.1f}x, fit {fp / fc:.1f}x; "
              f"max |Z difference| {np.max(np.abs(Zc - Zp)):.2e}")


if __name__ == "__main__":
    main()
