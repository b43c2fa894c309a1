"""Benchmark the compiled convolution kernels against the NumPy fallback.

Times im2col/col2im on the shapes the desk and paper presets actually hit,
then a full forward/backward pass through a down block. Both backends are
imported directly so the comparison runs regardless of DIDD_KERNELS.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from didd import _convcore_np
from didd import autodiff as ad
from didd import kernels, layers, rng

try:
    from didd import _convcore
except ImportError:
    _convcore = None

# (label, batch, channels, h, w) for a 4x4 stride-2 pad-1 window
SHAPES = [
    ("desk 16x3x32x32", 16, 3, 32, 32),
    ("desk 16x48x16x16", 16, 48, 16, 16),
    ("desk 16x96x8x8", 16, 96, 8, 8),
    ("paper 32x64x64x64", 32, 64, 64, 64),
    ("paper 32x256x16x16", 32, 256, 16, 16),
]
K, STRIDE, PAD = 4, 2, 1


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_pair(impl, x, cols, repeats):
    b, c, h, w = x.shape
    t_fwd = best_of(lambda: impl.im2col(x, K, STRIDE, PAD), repeats)
    t_bwd = best_of(lambda: impl.col2im(cols, b, c, h, w, K, STRIDE, PAD), repeats)
    return t_fwd, t_bwd


def bench_block(repeats):
    """One spectral-norm down block, forward plus backward, per backend."""
    gen = rng.stream(0, "bench")
    block = layers.down_block(gen, 3, 48)
    x = gen.standard_normal((16, 3, 32, 32)).astype(np.float32)

    def step():
        with ad.Tape() as tape:
            y = block.forward(ad.Tensor(x, requires_grad=False))
            loss = ad.mean(ad.abs_(y))
            ad.backward(tape, loss)

    return best_of(step, repeats)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args()

    if _convcore is None:
        print("compiled extension not available; showing NumPy timings only")
    impls = [("numpy", _convcore_np)] + ([("compiled", _convcore)] if _convcore else [])

    hdr = f"{'shape':<22}{'op':<8}" + "".join(f"{name:>12}" for name, _ in impls)
    print(hdr + ("     speedup" if _convcore else ""))
    print("-" * len(hdr) + ("-" * 12 if _convcore else ""))
    for label, b, c, h, w in SHAPES:
        gen = rng.stream(0, f"bench.{label}")
        x = gen.standard_normal((b, c, h, w)).astype(np.float32)
        cols = _convcore_np.im2col(x, K, STRIDE, PAD)
        rows = {}
        for name, impl in impls:
            rows[name] = bench_pair(impl, x, cols, args.repeats)
        for i, op in enumerate(("im2col", "col2im")):
            line = f"{label if i == 0 else '':<22}{op:<8}"
            for name, _ in impls:
                line += f"{rows[name][i] * 1e3:>10.3f}ms"
            if _convcore:
                line += f"{rows['numpy'][i] / rows['compiled'][i]:>11.2f}x"
            print(line)

    # autodiff looks the kernels up through didd.kernels on every call, so
    # swapping the module attributes switches the backend for the block bench
    print()
    saved = kernels.im2col, kernels.col2im
    try:
        for env, wanted in (("numpy", _convcore_np), ("compiled", _convcore)):
            if wanted is None:
                continue
            kernels.im2col, kernels.col2im = wanted.im2col, wanted.col2im
            t = bench_block(args.repeats)
            print(f"down block fwd+bwd ({env}): {t * 1e3:.3f} ms")
    finally:
        kernels.im2col, kernels.col2im = saved


if __name__ == "__main__":
    main()
