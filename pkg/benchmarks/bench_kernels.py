#!/usr/bin/env python3
"""Benchmark the compiled pixel kernels against the pure-Python fallback.

Runs each kernel on tile-sized buffers and reports per-call time and the
native-vs-pure speedup.  Usage:

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import random
import time

from tilewarehouse import kernels

TILE = 200
MOSAIC = 2 * TILE


def timed(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per case (best-of)")
    args = parser.parse_args()

    rng = random.Random(1)
    tile = bytes(rng.randrange(256) for _ in range(TILE * TILE))
    other = bytes(rng.randrange(256) for _ in range(TILE * TILE))
    mosaic = bytes(rng.randrange(256) for _ in range(MOSAIC * MOSAIC))
    src_2m5 = bytes(rng.randrange(256) for _ in range(500 * 500))

    cases = [
        ("count_value (200x200)", "count_value", (tile, 255)),
        ("merge_prefer_nonblank (200x200)", "merge_prefer_nonblank",
         (tile, other, 255)),
        ("downsample_mean (400x400 -> 200x200)", "downsample_mean",
         (mosaic, MOSAIC, MOSAIC)),
        ("downsample_nearest (400x400 -> 200x200)", "downsample_nearest",
         (mosaic, MOSAIC, MOSAIC)),
        ("resample_bilinear (500x500 -> 625x625)", "resample_bilinear",
         (src_2m5, 500, 500, 625, 625)),
        ("resample_nearest (500x500 -> 625x625)", "resample_nearest",
         (src_2m5, 500, 500, 625, 625)),
    ]

    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)} "
          f"(import selected: {kernels.BACKEND})\n")
    header = f"{'kernel':44s}" + "".join(f"{b:>12s}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for label, name, call_args in cases:
        times = {}
        for backend_name in backends:
            fn = getattr(kernels.get_backend(backend_name), name)
            times[backend_name] = timed(fn, call_args, args.repeat)
        row = f"{label:44s}"
        for backend_name in backends:
            row += f"{times[backend_name] * 1000:10.3f}ms"
        if "native" in times and "pure" in times:
            row += f"{times['pure'] / times['native']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
