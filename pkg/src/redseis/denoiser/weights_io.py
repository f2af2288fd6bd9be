"""DNCW weight files.

Layout (little endian)::

    b"DNCW"  u32 version  u32 depth  f32 band_low  f32 band_high
    per layer:
        u8 kind (0 ConvReLU, 1 ConvBNReLU, 2 Conv)  u32 in_ch  u32 out_ch
        f32 kernel[out][in][3][3]  f32 bias[out]
        kind 1 only: f32 gamma[out] beta[out] running_mean[out] running_var[out]
                     f32 bn_epsilon
"""
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..fileio import atomic_write_bytes
from .dncnn import FORMAT_VERSION, LayerKind, LayerSpec, WeightsBundle

MAGIC = b"DNCW"
_HEADER = struct.Struct("<4sIIff")
_LAYER = struct.Struct("<BII")


def encode_weights(bundle):
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, bundle.depth, *bundle.noise_band)]
    for layer in bundle.layers:
        parts.append(_LAYER.pack(int(layer.kind), layer.in_channels, layer.out_channels))
        parts.append(layer.weight.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
        if layer.has_bn:
            for name in ("gamma", "beta", "running_mean", "running_var"):
                parts.append(getattr(layer, name).astype("<f4").tobytes())
            parts.append(struct.pack("<f", layer.bn_epsilon))
    return b"".join(parts)


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated DNCW file while reading {what}: need {n} bytes, "
                f"{len(self.data) - self.pos} left",
                offset=self.pos, path=self.path,
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def floats(self, count, what):
        return np.frombuffer(self.take(4 * count, what), dtype="<f4").astype(np.float32)


def decode_weights(data, path=None):
    r = _Reader(data, path)
    magic, version, depth, lo, hi = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0, path=path)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported DNCW version {version}", offset=4, path=path)
    layers = []
    for k in range(depth):
        start = r.pos
        kind, c_in, c_out = _LAYER.unpack(r.take(_LAYER.size, f"layer {k} header"))
        if kind not in (0, 1, 2):
            raise FormatError(f"layer {k} has unknown kind {kind}", offset=start, path=path)
        if c_in < 1 or c_out < 1:
            raise FormatError(f"layer {k} has invalid channels {c_in}->{c_out}", offset=start, path=path)
        weight = r.floats(c_out * c_in * 9, f"layer {k} kernel").reshape(c_out, c_in, 3, 3)
        bias = r.floats(c_out, f"layer {k} bias")
        extra = {}
        if kind == LayerKind.CONV_BN_RELU:
            for name in ("gamma", "beta", "running_mean", "running_var"):
                extra[name] = r.floats(c_out, f"layer {k} {name}")
            extra["bn_epsilon"] = float(r.floats(1, f"layer {k} bn_epsilon")[0])
        try:
            layers.append(LayerSpec(LayerKind(kind), weight, bias, **extra))
        except ValueError as exc:
            raise FormatError(f"layer {k}: {exc}", offset=start, path=path) from None
    if r.pos != len(data):
        raise FormatError(
            f"{len(data) - r.pos} trailing bytes after {depth} layers", offset=r.pos, path=path
        )
    try:
        return WeightsBundle(tuple(layers), noise_band=(lo, hi), format_version=version)
    except ValueError as exc:
        raise FormatError(f"malformed network: {exc}", offset=_HEADER.size, path=path) from None


def save_weights(bundle, path):
    atomic_write_bytes(path, encode_weights(bundle))


def load_weights(path):
    path = Path(path)
    return decode_weights(path.read_bytes(), path=path)
