import sys

import numpy as np
import pytest

from redseis.denoiser import LayerKind, LayerSpec, WeightsBundle
from redseis.rng import make_rng


def brute_conv(x, w, b):
    """Quadruple loop 3x3 cross-correlation with zero padding 1; x is (C, H, W)."""
    c_in, h, wd = x.shape
    c_out = w.shape[0]
    out = np.zeros((c_out, h, wd))
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                acc = float(b[o])
                for c in range(c_in):
                    for di in range(3):
                        for dj in range(3):
                            ii, jj = i + di - 1, j + dj - 1
                            if 0 <= ii < h and 0 <= jj < wd:
                                acc += float(w[o, c, di, dj]) * float(x[c, ii, jj])
                out[o, i, j] = acc
    return out


def brute_bn(x, gamma, beta, mean, var, eps):
    out = np.empty_like(x)
    for c in range(x.shape[0]):
        out[c] = gamma[c] * (x[c] - mean[c]) / np.sqrt(var[c] + eps) + beta[c]
    return out


def random_bundle(depth=4, channels=3, seed=0, band=(0.1, 0.5)):
    rng = make_rng(seed, 77)
    layers = []
    for k in range(depth):
        c_in = 1 if k == 0 else channels
        c_out = 1 if k == depth - 1 else channels
        kind = LayerKind.CONV_RELU if k == 0 else LayerKind.CONV if k == depth - 1 else LayerKind.CONV_BN_RELU
        extra = {}
        if kind == LayerKind.CONV_BN_RELU:
            extra = dict(
                gamma=rng.uniform(0.5, 1.5, c_out), beta=rng.normal(0, 0.1, c_out),
                running_mean=rng.normal(0, 0.2, c_out), running_var=rng.uniform(0.5, 2, c_out),
            )
        layers.append(LayerSpec(kind, rng.normal(0, 0.4, (c_out, c_in, 3, 3)), rng.normal(0, 0.1, c_out), **extra))
    return WeightsBundle(tuple(layers), noise_band=band)


@pytest.fixture
def bundle():
    return random_bundle()


@pytest.fixture
def rng():
    return make_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
