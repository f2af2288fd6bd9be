"""Time the compiled and numpy 3x3 convolution backends on DnCNN-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from redseis import kernels

CASES = [
    # (batch, c_in, c_out, H, W)
    (1, 1, 16, 32, 32),
    (1, 16, 16, 32, 32),
    (8, 16, 16, 32, 32),
    (1, 16, 16, 128, 128),
    (1, 64, 64, 64, 64),
]


def bench(case, backend, repeat):
    n, c_in, c_out, h, w = case
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, c_in, h, w))
    wt = rng.standard_normal((c_out, c_in, 3, 3))
    b = rng.standard_normal(c_out)
    gy = rng.standard_normal((n, c_out, h, w))
    fwd = min(timeit.repeat(lambda: kernels.conv_forward(x, wt, b, backend=backend), number=1, repeat=repeat))
    bwd = min(timeit.repeat(lambda: kernels.conv_backward(x, wt, gy, backend=backend), number=1, repeat=repeat))
    return fwd, bwd


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    backends = kernels.AVAILABLE_BACKENDS
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    header = f"{'N,Cin,Cout,H,W':<22}" + "".join(f"{b + ' fwd':>14}{b + ' bwd':>14}" for b in backends)
    print(header)
    for case in CASES:
        row = f"{','.join(map(str, case)):<22}"
        for backend in backends:
            fwd, bwd = bench(case, backend, args.repeat)
            row += f"{fwd * 1e3:>12.3f}ms{bwd * 1e3:>12.3f}ms"
        print(row)


if __name__ == "__main__":
    main()
