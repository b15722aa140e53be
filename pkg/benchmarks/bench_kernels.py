#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the raw conv/pool kernels and a full training step (forward + loss +
backward + Adam) on both backends, and checks that the forward convolution
agrees bitwise, which the matching tap order guarantees.

Run:  python benchmarks/bench_kernels.py [--size 64] [--iters 30]
The in-process backend selection (WDSM_BACKEND) does not matter here; both
kernel modules are imported directly.
"""

import argparse
import time

import numpy as np

from wdsm import kernels_numpy
from wdsm.loss import LossConfig, weak_density_loss
from wdsm.models import UNetConfig, init_unet_params, unet_forward
from wdsm.phantom import generate_phantom
from wdsm.tensor import Tape
from wdsm.train import adam_init, adam_step

try:
    from wdsm import kernels_numba

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def timeit(fn, iters):
    fn()  # warm-up (and numba compilation)
    t0 = time.perf_counter()
    for _ in range(iters):
        fn()
    return (time.perf_counter() - t0) / iters * 1000.0


def bench_raw_kernels(size, iters):
    rng = np.random.default_rng(0)
    pad = rng.standard_normal((16, size + 2, size + 2)).astype(np.float32)
    w = rng.standard_normal((16, 16, 3, 3)).astype(np.float32)
    b = rng.standard_normal(16).astype(np.float32)
    gout = rng.standard_normal((16, size, size)).astype(np.float32)
    x = rng.standard_normal((16, size, size)).astype(np.float32)

    rows = []
    for label, mod in _backends():
        rows.append(
            (
                label,
                timeit(lambda: mod.conv2d_fwd(pad, w, b), iters),
                timeit(lambda: mod.conv2d_param_grad(pad, gout), iters),
                timeit(lambda: mod.maxpool2_fwd(x), iters),
            )
        )
    print(f"\nraw kernels, 16->16 channels @ {size}x{size} (ms/call)")
    print(f"{'backend':8} {'conv_fwd':>10} {'conv_pgrad':>10} {'pool_fwd':>10}")
    for label, a, c, d in rows:
        print(f"{label:8} {a:10.3f} {c:10.3f} {d:10.3f}")

    if HAVE_NUMBA:
        same = np.array_equal(
            kernels_numba.conv2d_fwd(pad, w, b), kernels_numpy.conv2d_fwd(pad, w, b)
        )
        print(f"forward conv bitwise match across backends: {same}")
        assert same, "backends disagree on the forward convolution"


def _backends():
    out = [("numpy", kernels_numpy)]
    if HAVE_NUMBA:
        out.insert(0, ("numba", kernels_numba))
    return out


def bench_train_step(size, iters):
    import wdsm.tensor as tensor_mod

    sample = generate_phantom(42, size, 6)
    cfg = UNetConfig()
    loss_cfg = LossConfig()

    results = []
    for label, mod in _backends():
        tensor_mod.kernels = mod  # swap the kernel module under the ops
        params = init_unet_params(cfg, seed=1)
        state = adam_init({k: p.data for k, p in params.items()})
        step_no = [0]

        def step():
            for p in params.values():
                p.zero_grad()
            with Tape() as tape:
                pair = unet_forward(cfg, params, sample.image, sample.breast_mask)
                total, _ = weak_density_loss(pair, sample.breast_mask, 0.54, loss_cfg)
                tape.backward(total)
            step_no[0] += 1
            new_data, state_new = adam_step(
                {k: p.data for k, p in params.items()},
                {k: p.grad for k, p in params.items()},
                state,
                1e-3,
                (0.9, 0.999),
                1e-8,
                step_no[0],
            )
            for k, p in params.items():
                p.data = new_data[k]

        results.append((label, timeit(step, iters)))

    from wdsm import backend

    tensor_mod.kernels = backend.kernels  # restore ambient selection
    print(f"\nfull U-Net training step @ {size}x{size} (ms/step)")
    for label, ms in results:
        print(f"{label:8} {ms:10.2f}")
    if len(results) == 2:
        print(f"speedup: {results[1][1] / results[0][1]:.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--iters", type=int, default=30)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba not importable: benchmarking the numpy fallback only")
    bench_raw_kernels(args.size, args.iters)
    bench_train_step(args.size, args.iters)


if __name__ == "__main__":
    main()
