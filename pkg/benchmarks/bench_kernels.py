#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the numpy/scipy fallback.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from gffperc.geometry import Box, VertexSet
from gffperc.kernels import backends


def bench_labeling(impls, side=21, reps=300, density=0.5):
    rng = np.random.default_rng(0)
    masks = [rng.random((side,) * 3) < density for _ in range(reps)]
    print(f"\ncluster labeling, {reps} x {side}^3 masks at density {density}:")
    results = {}
    for name, impl in impls.items():
        out = impl.label_components(masks[0])  # warm up
        t0 = time.perf_counter()
        for m in masks:
            out = impl.label_components(m)
        dt = time.perf_counter() - t0
        results[name] = dt
        print(f"  {name:9s} {dt*1e3/reps:8.3f} ms/mask   ({reps/dt:7.0f} masks/s)")
    _speedup(results)


def bench_escape(impls, walks=4000):
    K = VertexSet.from_box(Box(3, (0, 0, 0)))
    lo = K.coords.min(axis=0)
    shape = K.coords.max(axis=0) + 1 - lo
    member = np.zeros(tuple(shape), dtype=np.uint8)
    member[tuple((K.coords - lo).T)] = 1
    center = K.coords.mean(axis=0).round().astype(np.int64)
    print(f"\nescape walks, {walks} walks from one vertex, radius 30:")
    results = {}
    for name, impl in impls.items():
        t0 = time.perf_counter()
        esc = impl.escape_count(
            member.ravel(), lo, shape.astype(np.int64),
            K.coords[0], 900.0, center, walks, 42,
        )
        dt = time.perf_counter() - t0
        results[name] = dt
        print(f"  {name:9s} {dt:8.3f} s   (escape fraction {esc/walks:.3f})")
    _speedup(results)


def _speedup(results):
    if "compiled" in results and "fallback" in results:
        print(f"  -> compiled is {results['fallback']/results['compiled']:.1f}x faster")


def main():
    impls = backends()
    print(f"available backends: {', '.join(impls)}")
    bench_labeling(impls, side=21, reps=300)
    bench_labeling(impls, side=63, reps=30)
    bench_escape(impls, walks=4000)


if __name__ == "__main__":
    main()
