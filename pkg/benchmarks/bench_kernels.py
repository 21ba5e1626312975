"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Also times a full ddim-bayes decode of one 64x64 block (10 reverse steps).
"""

import argparse
import time

import numpy as np

from afddim import build_constellation, kernels, use_backend
from afddim._backend import HAVE_NUMBA
from afddim.channel import calibrated_hops, propagate_chain
from afddim.detect import DetectorConfig, ddim_decode
from afddim.signal import draw_block


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compile on the numba side)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    out = []
    for M in (16, 64, 256):
        c = build_constellation(M)
        x = rng.standard_normal(1 << 16) + 1j * rng.standard_normal(1 << 16)
        out.append((f"posterior_mean M={M} n=65536",
                    lambda c=c, x=x: kernels.posterior_mean(x, 0.8, 0.3, c.points, c.log_prior)))
        out.append((f"nearest_index  M={M} n=65536", lambda c=c, x=x: kernels.nearest_index(x, c.points)))
    nodes, weights = np.polynomial.hermite.hermgauss(40)
    for M in (16, 64):
        c = build_constellation(M)
        out.append((f"gh_mmse        M={M} order=40",
                    lambda c=c: kernels.gh_mmse(c.points, c.prior, 3.0, nodes, weights)))
    c = build_constellation(64)
    block = draw_block(c, 64, rng)
    x_H, st, _ = propagate_chain(block, calibrated_hops(10, 15.0), rng)
    cfg = DetectorConfig(10, c)
    out.append(("ddim decode    M=64 N=64 T=10", lambda: ddim_decode(x_H, st, cfg)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng):
        with use_backend("numpy"):
            t_np = best_of(fn, args.repeat)
        with use_backend("numba"):
            t_nb = best_of(fn, args.repeat)
        print(f"{name:34s} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
