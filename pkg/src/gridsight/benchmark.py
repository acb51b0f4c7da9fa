"""Timing of the compiled kernels against the numpy fallback."""

from __future__ import annotations

import time

import numpy as np

from . import kernels


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(seed: int = 0):
    """(name, callable taking a backend module) for representative workloads."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((8, 32, 32, 64)).astype(np.float32)
    cols = rng.standard_normal((8 * 32 * 64, 32 * 9)).astype(np.float32)
    pooled, arg = kernels.BACKENDS["python"].maxpool2_forward(x)
    dout = rng.standard_normal(pooled.shape).astype(np.float32)
    ncells = 64 * 64
    cells = rng.integers(0, ncells, 2_000_000)
    classes = rng.integers(0, 4, 2_000_000)
    return [
        ("im2col3x3 8x32x32x64", lambda k: k.im2col3x3(x)),
        ("col2im3x3 8x32x32x64", lambda k: k.col2im3x3(cols, 8, 32, 32, 64)),
        ("maxpool2 forward", lambda k: k.maxpool2_forward(x)),
        ("maxpool2 backward", lambda k: k.maxpool2_backward(dout, arg)),
        ("vote 2M points", lambda k: k.vote(cells, classes, ncells)),
    ]


def run_kernel_benchmark(repeat: int = 5) -> list[str]:
    names = list(kernels.BACKENDS)
    lines = [f"active backend: {kernels.BACKEND}", f"{'kernel':26s}" + "".join(f"{n:>12s}" for n in names)]
    for name, case in kernel_cases():
        times = [_best(lambda: case(kernels.BACKENDS[n]), repeat) for n in names]
        row = f"{name:26s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"   x{times[0] / times[1]:.1f}"
        lines.append(row)
    return lines
