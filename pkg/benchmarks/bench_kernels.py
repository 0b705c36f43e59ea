#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the two hot kernels (uniform quantization, step-size SSE search) on
layer sizes matching the experiment models, then a full quantized
retraining step both ways.  Run from the repo root:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from qdnn_lab.kernels import backends
from qdnn_lab.data import DatasetSpec, generate_training_set
from qdnn_lab.models import ModelConfig, build_fcdnn
from qdnn_lab.quant import QuantSpec
from qdnn_lab.rng import RandomSource
from qdnn_lab.train import TrainConfig, retrain_quantized


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_quantize(table):
    print("\nuniform quantization (signed, n=2)")
    print(f"{'size':>8} " + " ".join(f"{name:>12}" for name in table))
    rng = np.random.default_rng(0)
    for size in (256, 16_384, 65_536):
        x = rng.normal(size=size)
        row = []
        for name, (quantize, _) in table.items():
            dt = timeit(lambda: quantize(x, 0.1, -0.1, 0.1), repeats=200)
            row.append(dt * 1e6)
        ratio = row[0] / row[-1] if len(row) > 1 else 1.0
        cells = " ".join(f"{v:>10.1f}us" for v in row)
        print(f"{size:>8} {cells}   x{ratio:.1f}")


def bench_search(table):
    print("\nstep-size search (2000 grid points + refinement)")
    rng = np.random.default_rng(1)
    for bits in (2, 4, 8):
        k = 2 ** (bits - 1) - 1
        print(f"  n={bits}")
        print(f"{'size':>8} " + " ".join(f"{name:>12}" for name in table))
        for size in (256, 16_384, 65_536):
            w = rng.normal(size=size)
            aw = np.abs(w)
            aw.sort()
            p1 = np.concatenate(([0.0], np.cumsum(aw)))
            p2 = np.concatenate(([0.0], np.cumsum(aw * aw)))
            row = []
            for name, (_, search) in table.items():
                dt = timeit(lambda: search(aw, p1, p2, k, 2000, 64), repeats=20)
                row.append(dt * 1e3)
            ratio = row[0] / row[-1] if len(row) > 1 else 1.0
            cells = " ".join(f"{v:>10.3f}ms" for v in row)
            print(f"{size:>8} {cells}   x{ratio:.1f}")


def bench_retrain_step(table):
    # end to end: one quantized retraining epoch of a 128-4 model, which
    # re-derives every layer's step size at each of its steps
    print("\nquantized retraining, one epoch of 128-4 (W2A2, batch 128)")
    import qdnn_lab.kernels as kernels

    spec = DatasetSpec(ring_count=2, points_per_semicircle=50, subsamples_per_core=4)
    dataset = generate_training_set(spec)
    net = build_fcdnn(ModelConfig(128, 4), RandomSource(0).split("init"))
    config = TrainConfig(epochs=1, batch_size=128, lr=0.001, eval_density=20.0, seed=0)
    for name, (quantize, search) in table.items():
        saved = (kernels.quantize, kernels.step_size_search_sorted)
        kernels.quantize, kernels.step_size_search_sorted = quantize, search
        try:
            t0 = time.perf_counter()
            retrain_quantized(net, dataset, QuantSpec(weight_bits=2, activation_bits=2), config)
            dt = time.perf_counter() - t0
        finally:
            kernels.quantize, kernels.step_size_search_sorted = saved
        print(f"  {name:>8}: {dt:.2f} s/epoch")


def main():
    table = backends()
    print("available backends:", ", ".join(table))
    bench_quantize(table)
    bench_search(table)
    bench_retrain_step(table)


if __name__ == "__main__":
    main()
