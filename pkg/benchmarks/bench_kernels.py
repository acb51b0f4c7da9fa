"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse

from gridsight.benchmark import run_kernel_benchmark

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    for line in run_kernel_benchmark(ap.parse_args().repeat):
        print(line)
