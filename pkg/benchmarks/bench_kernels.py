"""Benchmark the numba propagation kernel against the numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--samples N] [--batch K] [--repeat R]

The workload mirrors the hot loop of the charge-noise simulations: a batch
of 5-level unitaries stepped through a Gaussian pulse, one exact matrix
exponential per envelope sample.  Cross-checks both paths for agreement
before timing.  Set QUDITPOVM_NUMBA=0 to verify the package runs entirely
on the fallback.
"""

import argparse
import time

import numpy as np

from quditpovm import kernels
from quditpovm.pulse_sim import gaussian_envelope


def make_workload(n_samples, batch, seed=0):
    rng = np.random.default_rng(seed)
    d = 5
    h0 = rng.normal(size=(batch, d)) * 2 * np.pi * 1.5  # rad/ns detunings
    v = np.zeros((d, d), dtype=complex)
    for n in range(d - 1):
        v[n + 1, n] = 0.5 * np.sqrt(n + 1)
    v = v + v.conj().T
    env = 0.11 * gaussian_envelope(n_samples, 0.222)
    u0 = np.broadcast_to(np.eye(d, dtype=complex), (batch, d, d)).copy()
    return u0, h0, v, env, 0.222


def time_fn(fn, args, repeat):
    fn(*args)  # warm-up (JIT compile / page in)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_batch(n_samples, batch, repeat):
    workload = make_workload(n_samples, batch)
    steps = n_samples * batch
    print(f"batch={batch:3d} samples={n_samples}  "
          "(calibration root-solves run at batch=1, noise channels at k)")
    ref = kernels.propagate_pulse_batch_numpy(*workload)
    t_numpy = time_fn(kernels.propagate_pulse_batch_numpy, workload, repeat)
    print(f"  numpy fallback : {t_numpy * 1e3:8.2f} ms  "
          f"({t_numpy / steps * 1e6:6.2f} us/step)")
    if kernels.NUMBA_ENABLED:
        got = kernels.propagate_pulse_batch_numba(*workload)
        dev = np.max(np.abs(got - ref))
        t_numba = time_fn(kernels.propagate_pulse_batch_numba, workload, repeat)
        print(f"  numba kernel   : {t_numba * 1e3:8.2f} ms  "
              f"({t_numba / steps * 1e6:6.2f} us/step)")
        print(f"  speedup        : {t_numpy / t_numba:8.2f}x, "
              f"max deviation {dev:.3e}")
    else:
        print("  numba disabled (QUDITPOVM_NUMBA=0 or not installed); "
              "fallback only")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=450)
    parser.add_argument("--batch", type=int, default=20)
    parser.add_argument("--repeat", type=int, default=10)
    args = parser.parse_args()
    for batch in {1, args.batch}:
        bench_batch(args.samples, batch, args.repeat)


if __name__ == "__main__":
    main()
