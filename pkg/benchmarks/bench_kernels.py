#!/usr/bin/env python3
"""Compare the compiled and numpy convolution backends.

Times the three kernel entry points on the layer geometries the 16^3
networks actually use, at training batch size and at the interactive
batch-1 snap path, and prints a per-layer table plus totals.

Run:  python benchmarks/bench_kernels.py [--batch 64] [--reps 5]
"""

import argparse
import time

import numpy as np

from voxsnap.kernels import numpy_backend

try:
    from voxsnap.kernels import _conv_cy
except ImportError:
    _conv_cy = None

# (name, input shape sans batch, kernel shape); stride 2, pad 1 throughout
LAYERS = [
    ("conv1 1->32 @16^3", (1, 16, 16, 16), (32, 1, 4, 4, 4)),
    ("conv2 32->64 @8^3", (32, 8, 8, 8), (64, 32, 4, 4, 4)),
    ("conv3 64->128 @4^3", (64, 4, 4, 4), (128, 64, 4, 4, 4)),
]


def timeit(fn, *args, reps):
    fn(*args)  # warm-up
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps


def macs(batch, kshape, out_extent):
    f, c, k, _, _ = kshape
    return batch * f * c * k**3 * out_extent**3


def run(batch, reps):
    rng = np.random.default_rng(0)
    backends = {"numpy": numpy_backend}
    if _conv_cy is not None:
        backends["compiled"] = _conv_cy
    print(f"\nbatch={batch}  ({', '.join(backends)})")
    header = f"{'layer':<20} {'op':<6}" + "".join(f" {name:>10}" for name in backends)
    print(header + "   GFLOP/s(best)")
    totals = dict.fromkeys(backends, 0.0)
    for name, xshape, kshape in LAYERS:
        x = rng.normal(size=(batch,) + xshape)
        out_extent = (xshape[1] + 2 - kshape[2]) // 2 + 1
        dy = rng.normal(size=(batch, kshape[0], out_extent, out_extent, out_extent))
        flop = 2 * macs(batch, kshape, out_extent)
        kern = rng.normal(size=kshape)
        ops = {
            "fwd": lambda mod: mod.conv3d_forward(x, kern, 2, 1),
            "kgrad": lambda mod: mod.conv3d_kernel_grad(x, dy, kshape, 2, 1),
            "convT": lambda mod: mod.conv_transpose3d_forward(dy, kern, 2, 1),
        }
        for op_name, op in ops.items():
            times = {}
            for bname, mod in backends.items():
                times[bname] = timeit(op, mod, reps=reps)
                totals[bname] += times[bname]
            cells = "".join(f" {times[b] * 1e3:9.2f}ms" for b in backends)
            print(f"{name:<20} {op_name:<6}{cells}   {flop / min(times.values()) / 1e9:8.2f}")
    print("totals: " + "  ".join(f"{b}={t * 1e3:.1f}ms" for b, t in totals.items()))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=None,
                        help="single batch size (default: both 64 and 1)")
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()
    if _conv_cy is None:
        print("note: compiled backend not built, timing numpy only")
    for batch in [args.batch] if args.batch else [64, 1]:
        run(batch, args.reps if batch > 1 else max(args.reps, 30))


if __name__ == "__main__":
    main()
