import numpy as np
import pytest

from redseis.denoiser import (
    LayerKind,
    LayerSpec,
    WeightsBundle,
    batchnorm_inference,
    conv2d_same,
    dncnn_residual,
    fold_batchnorm,
    relu,
)
from conftest import brute_bn, brute_conv, random_bundle


def _reference_residual(bundle, m):
    """Layer-by-layer oracle built from the brute-force loops."""
    x = np.asarray(m, dtype=np.float64)[None]
    for layer in bundle.layers:
        w = layer.weight.astype(np.float64)
        b = layer.bias.astype(np.float64)
        x = brute_conv(x, w, b)
        if layer.has_bn:
            x = brute_bn(x, *(getattr(layer, n).astype(np.float64) for n in
                              ("gamma", "beta", "running_mean", "running_var")), layer.bn_epsilon)
        if layer.kind != LayerKind.CONV:
            x = np.maximum(x, 0.0)
    return x[0]


def test_conv2d_same_against_loops():
    rng = np.random.default_rng(0)
    for _ in range(10):
        c_in, c_out = rng.integers(1, 4, 2)
        h, w = rng.integers(1, 9, 2)
        layer = LayerSpec(LayerKind.CONV, rng.standard_normal((c_out, c_in, 3, 3)), rng.standard_normal(c_out))
        x = rng.standard_normal((c_in, h, w))
        ref = brute_conv(x, layer.weight.astype(np.float64), layer.bias.astype(np.float64))
        np.testing.assert_allclose(conv2d_same(x, layer), ref, atol=1e-12)


def test_conv_is_cross_correlation():
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 0, 0] = 1.0  # top-left tap reads the up-left neighbour
    layer = LayerSpec(LayerKind.CONV, k, [0.0])
    x = np.zeros((1, 4, 4))
    x[0, 1, 1] = 1.0
    y = conv2d_same(x, layer)[0]
    assert y[2, 2] == 1.0 and y.sum() == 1.0


def test_conv_channel_mismatch():
    layer = LayerSpec(LayerKind.CONV, np.zeros((1, 2, 3, 3)), [0.0])
    with pytest.raises(ValueError):
        conv2d_same(np.zeros((3, 4, 4)), layer)


def test_batchnorm_against_loop(bundle):
    layer = bundle.layers[1]
    x = np.random.default_rng(1).standard_normal((layer.out_channels, 5, 5))
    ref = brute_bn(x, *(getattr(layer, n).astype(np.float64) for n in
                        ("gamma", "beta", "running_mean", "running_var")), layer.bn_epsilon)
    np.testing.assert_allclose(batchnorm_inference(x, layer), ref, atol=1e-12)
    with pytest.raises(ValueError):
        batchnorm_inference(x, bundle.layers[0])


def test_relu():
    assert relu(np.array([-1.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]


def test_residual_matches_layerwise_oracle(bundle):
    m = np.random.default_rng(2).standard_normal((9, 11))
    np.testing.assert_allclose(dncnn_residual(bundle, m), _reference_residual(bundle, m), atol=1e-10)


def test_folded_bn_agrees(bundle):
    m = np.random.default_rng(3).standard_normal((16, 16))
    np.testing.assert_allclose(dncnn_residual(bundle, m, fold_bn=True), dncnn_residual(bundle, m), rtol=1e-10, atol=1e-10)
    assert len(fold_batchnorm(bundle)) == bundle.depth


def test_zero_network_gives_zero_residual():
    layers = (
        LayerSpec(LayerKind.CONV_RELU, np.zeros((2, 1, 3, 3)), np.zeros(2)),
        LayerSpec(LayerKind.CONV, np.zeros((1, 2, 3, 3)), np.zeros(1)),
    )
    out = dncnn_residual(WeightsBundle(layers), np.ones((5, 5)))
    assert not out.any()


def test_parameters_are_float32_and_frozen(bundle):
    layer = bundle.layers[0]
    assert layer.weight.dtype == np.float32
    with pytest.raises(ValueError):
        layer.weight[0, 0, 0, 0] = 1.0


@pytest.mark.parametrize("make", [
    lambda: (LayerSpec(LayerKind.CONV, np.zeros((1, 1, 3, 3)), [0.0]),),                       # too shallow
    lambda: (LayerSpec(LayerKind.CONV, np.zeros((2, 1, 3, 3)), [0, 0]),
             LayerSpec(LayerKind.CONV, np.zeros((1, 2, 3, 3)), [0])),                          # first not ConvReLU
    lambda: (LayerSpec(LayerKind.CONV_RELU, np.zeros((2, 1, 3, 3)), [0, 0]),
             LayerSpec(LayerKind.CONV, np.zeros((1, 3, 3, 3)), [0])),                          # channel chain broken
    lambda: (LayerSpec(LayerKind.CONV_RELU, np.zeros((2, 1, 3, 3)), [0, 0]),
             LayerSpec(LayerKind.CONV_RELU, np.zeros((1, 2, 3, 3)), [0])),                     # last not Conv
])
def test_invalid_stacks(make):
    with pytest.raises(ValueError):
        WeightsBundle(make())


def test_layer_validation():
    with pytest.raises(ValueError):
        LayerSpec(LayerKind.CONV, np.zeros((1, 1, 5, 5)), [0.0])
    with pytest.raises(ValueError):
        LayerSpec(LayerKind.CONV, np.zeros((1, 1, 3, 3)), [0.0, 1.0])
    with pytest.raises(ValueError):
        LayerSpec(LayerKind.CONV_BN_RELU, np.zeros((1, 1, 3, 3)), [0.0])
    with pytest.raises(ValueError):
        LayerSpec(LayerKind.CONV, np.full((1, 1, 3, 3), np.inf), [0.0])


def test_bundle_metadata():
    b = random_bundle(depth=5, channels=4, band=(0.25, 0.75))
    assert b.depth == 5 and b.channels == 4 and b.noise_band == (0.25, 0.75)
    assert b.equals(random_bundle(depth=5, channels=4, band=(0.25, 0.75)))
    assert not b.equals(random_bundle(depth=5, channels=4, seed=1, band=(0.25, 0.75)))
