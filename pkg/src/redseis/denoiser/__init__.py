"""Denoisers: the DnCNN inference engine, classical baselines and operator banks."""
from .dncnn import (
    LayerKind,
    LayerSpec,
    WeightsBundle,
    batchnorm_inference,
    conv2d_same,
    dncnn_residual,
    fold_batchnorm,
    relu,
)
from .handles import (
    BUILTIN_BANK_DIR,
    DenoiserHandle,
    DnCNNDenoiser,
    GaussianBlurDenoiser,
    NullDenoiser,
    denoise,
    load_bank,
    select_operator,
)
from .weights_io import decode_weights, encode_weights, load_weights, save_weights

__all__ = [
    "BUILTIN_BANK_DIR",
    "DenoiserHandle",
    "DnCNNDenoiser",
    "GaussianBlurDenoiser",
    "LayerKind",
    "LayerSpec",
    "NullDenoiser",
    "WeightsBundle",
    "batchnorm_inference",
    "conv2d_same",
    "decode_weights",
    "denoise",
    "dncnn_residual",
    "encode_weights",
    "fold_batchnorm",
    "load_bank",
    "load_weights",
    "relu",
    "save_weights",
    "select_operator",
]
