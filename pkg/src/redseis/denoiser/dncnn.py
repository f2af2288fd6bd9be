"""DnCNN weights and the from-scratch inference stack.

A bundle is an ordered list of 3x3 convolution layers::

    ConvReLU (1 -> C) , ConvBNReLU (C -> C) * (D - 2) , Conv (C -> 1)

``C = 64`` and ``D = 20`` reproduce the full-size network; smaller values are
allowed and recorded in the bundle. The network predicts the noise, so the
clean estimate is ``m - dncnn_residual(weights, m)``.
"""
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .. import kernels

FORMAT_VERSION = 1


class LayerKind(IntEnum):
    CONV_RELU = 0
    CONV_BN_RELU = 1
    CONV = 2


def _f32(a, name):
    arr = np.array(a, dtype=np.float32, copy=True)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """One convolution layer; parameters are stored as float32."""

    kind: LayerKind
    weight: np.ndarray
    bias: np.ndarray
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        w = _f32(self.weight, "weight")
        if w.ndim != 4 or w.shape[2:] != (3, 3):
            raise ValueError(f"kernel must have shape (out, in, 3, 3), got {w.shape}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", _f32(self.bias, "bias"))
        if self.bias.shape != (w.shape[0],):
            raise ValueError(f"bias shape {self.bias.shape} does not match {w.shape[0]} outputs")
        bn = ("gamma", "beta", "running_mean", "running_var")
        if self.kind == LayerKind.CONV_BN_RELU:
            for name in bn:
                v = getattr(self, name)
                if v is None:
                    raise ValueError(f"ConvBNReLU layer is missing {name}")
                v = _f32(v, name)
                if v.shape != (w.shape[0],):
                    raise ValueError(f"{name} shape {v.shape} does not match {w.shape[0]} outputs")
                object.__setattr__(self, name, v)
            if np.any(self.running_var <= 0):
                raise ValueError("running_var entries must be positive")
            eps = float(np.float32(self.bn_epsilon))
            if not eps > 0:
                raise ValueError(f"bn_epsilon must be positive, got {self.bn_epsilon}")
            object.__setattr__(self, "bn_epsilon", eps)
        else:
            for name in bn:
                if getattr(self, name) is not None:
                    raise ValueError(f"{self.kind.name} layer must not carry {name}")

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def has_bn(self):
        return self.kind == LayerKind.CONV_BN_RELU

    def equals(self, other):
        """Bitwise equality of kind and every parameter array."""
        if self.kind != other.kind or (self.has_bn and self.bn_epsilon != other.bn_epsilon):
            return False
        for name in ("weight", "bias", "gamma", "beta", "running_mean", "running_var"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and (a.shape != b.shape or a.tobytes() != b.tobytes()):
                return False
        return True


@dataclass(frozen=True, eq=False)
class WeightsBundle:
    layers: tuple
    noise_band: tuple = (0.0, 0.0)
    format_version: int = FORMAT_VERSION
    _f64: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        lo, hi = (float(np.float32(v)) for v in self.noise_band)
        object.__setattr__(self, "noise_band", (lo, hi))
        validate_layers(layers)
        # float64 copies used by inference; derived once, never mutated
        object.__setattr__(self, "_f64", tuple(_layer_f64(l) for l in layers))

    @property
    def depth(self):
        return len(self.layers)

    @property
    def channels(self):
        return self.layers[0].out_channels

    def equals(self, other):
        return (
            self.depth == other.depth
            and self.noise_band == other.noise_band
            and self.format_version == other.format_version
            and all(a.equals(b) for a, b in zip(self.layers, other.layers))
        )


def _layer_f64(layer):
    out = {"w": layer.weight.astype(np.float64), "b": layer.bias.astype(np.float64)}
    if layer.has_bn:
        out["scale"] = layer.gamma.astype(np.float64) / np.sqrt(
            layer.running_var.astype(np.float64) + layer.bn_epsilon
        )
        out["mean"] = layer.running_mean.astype(np.float64)
        out["beta"] = layer.beta.astype(np.float64)
    return out


def validate_layers(layers):
    if len(layers) < 2:
        raise ValueError(f"a DnCNN needs at least 2 layers, got {len(layers)}")
    first, last = layers[0], layers[-1]
    if first.kind != LayerKind.CONV_RELU or first.in_channels != 1:
        raise ValueError("first layer must be ConvReLU with a single input channel")
    if last.kind != LayerKind.CONV or last.out_channels != 1:
        raise ValueError("last layer must be Conv with a single output channel")
    for k, layer in enumerate(layers[1:-1], start=1):
        if layer.kind != LayerKind.CONV_BN_RELU:
            raise ValueError(f"layer {k} must be ConvBNReLU, got {layer.kind.name}")
        if layer.in_channels != layer.out_channels:
            raise ValueError(f"hidden layer {k} must map C -> C channels")
    for k in range(1, len(layers)):
        if layers[k].in_channels != layers[k - 1].out_channels:
            raise ValueError(
                f"layer {k} expects {layers[k].in_channels} channels, "
                f"layer {k - 1} produces {layers[k - 1].out_channels}"
            )


def relu(x):
    return np.maximum(x, 0.0)


def conv2d_same(x, layer):
    """Zero-padded 3x3 convolution of a (C_in, H, W) array; spatial size is kept."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) input, got shape {x.shape}")
    if x.shape[0] != layer.in_channels:
        raise ValueError(f"input has {x.shape[0]} channels, layer expects {layer.in_channels}")
    w = layer.weight.astype(np.float64)
    b = layer.bias.astype(np.float64)
    return kernels.conv_forward(x[None], w, b)[0]


def batchnorm_inference(x, layer):
    """Per-channel normalization with the stored running statistics."""
    if not layer.has_bn:
        raise ValueError(f"{layer.kind.name} layer has no batch-norm parameters")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != layer.out_channels:
        raise ValueError(f"input has {x.shape[0]} channels, layer has {layer.out_channels}")
    mean = layer.running_mean.astype(np.float64)[:, None, None]
    var = layer.running_var.astype(np.float64)[:, None, None]
    gamma = layer.gamma.astype(np.float64)[:, None, None]
    beta = layer.beta.astype(np.float64)[:, None, None]
    return gamma * (x - mean) / np.sqrt(var + layer.bn_epsilon) + beta


def dncnn_residual(weights, m, fold_bn=False):
    """Apply the layer stack to a single-channel grid; returns the predicted noise."""
    grid = np.asarray(m, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2D grid, got shape {grid.shape}")
    x = grid[None, None]
    stack = fold_batchnorm(weights) if fold_bn else None
    for k, layer in enumerate(weights.layers):
        if stack is not None:
            w, b = stack[k]
            x = kernels.conv_forward(x, w, b)
        else:
            p = weights._f64[k]
            x = kernels.conv_forward(x, p["w"], p["b"])
            if layer.has_bn:
                x = (x - p["mean"][None, :, None, None]) * p["scale"][None, :, None, None]
                x += p["beta"][None, :, None, None]
        if layer.kind != LayerKind.CONV:
            x = np.maximum(x, 0.0)
    return x[0, 0]


def fold_batchnorm(weights):
    """Per-layer ``(kernel, bias)`` float64 pairs with batch norm merged into the convolution."""
    folded = []
    for p in weights._f64:
        w, b = p["w"], p["b"]
        if "scale" in p:
            s = p["scale"]
            w = w * s[:, None, None, None]
            b = (b - p["mean"]) * s + p["beta"]
        folded.append((w, b))
    return folded
