"""Desk-scale training of the residual denoising network.

The loss over a batch of noisy/clean pairs ``(m_j, s_j)`` is

    (1 / 2N) * sum_j |L(m_j) - (m_j - s_j)|_F^2

Gradients are computed by hand-written reverse mode through the
convolution, batch-norm and ReLU layers and fed to Adam.

Batch norm runs in one of two modes:

``"batch"``
    normalize with the current batch statistics and backpropagate through
    them (used while training; running statistics are updated with
    momentum 0.9 on the side).
``"inference"``
    normalize with the stored running statistics, which are treated as
    constants; only gamma and beta receive gradients.
"""
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .denoiser.dncnn import LayerKind, LayerSpec, WeightsBundle
from .errors import ConfigError, TrainingDiverged
from .fileio import atomic_write_text
from .rng import make_rng
from .section import rms

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9


@dataclass
class AdamHyper:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")


@dataclass
class TrainConfig:
    depth: int = 5
    channels: int = 16
    patch_size: int = 32
    batch_size: int = 8
    steps: int = 2000
    epochs: int = 1
    adam: AdamHyper = field(default_factory=AdamHyper)
    noise_band: tuple = (0.125, 1.0)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.adam, dict):
            self.adam = AdamHyper(**self.adam)
        self.noise_band = tuple(float(v) for v in self.noise_band)
        if self.depth < 3:
            raise ConfigError(f"depth must be >= 3, got {self.depth}")
        for name in ("channels", "patch_size", "batch_size", "steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        lo, hi = self.noise_band
        if len(self.noise_band) != 2 or lo < 0 or hi < lo:
            raise ConfigError(f"noise_band must be (low, high) with 0 <= low <= high, got {self.noise_band}")

    @property
    def total_steps(self):
        """Optimizer steps: ``steps`` per epoch."""
        return self.steps * self.epochs

    def to_dict(self):
        d = asdict(self)
        d["noise_band"] = list(self.noise_band)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training option(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class Network:
    """Float64 trainable parameters plus batch-norm running statistics.

    ``params[k]`` holds ``w`` and ``b`` for every layer and ``gamma``/``beta``
    for batch-norm layers; ``stats[k]`` holds ``mean``/``var`` (or is empty).
    """

    def __init__(self, kinds, params, stats, noise_band=(0.0, 0.0)):
        self.kinds = list(kinds)
        self.params = params
        self.stats = stats
        self.noise_band = tuple(noise_band)

    @classmethod
    def initialize(cls, depth, channels, seed=0, noise_band=(0.0, 0.0)):
        """He-normal kernels (variance 2 / fan_in), zero biases, gamma 1, beta 0."""
        rng = make_rng(seed, 0x1417)
        kinds, params, stats = [], [], []
        for k in range(depth):
            c_in = 1 if k == 0 else channels
            c_out = 1 if k == depth - 1 else channels
            kind = (
                LayerKind.CONV_RELU if k == 0
                else LayerKind.CONV if k == depth - 1
                else LayerKind.CONV_BN_RELU
            )
            p = {
                "w": rng.standard_normal((c_out, c_in, 3, 3)) * math.sqrt(2.0 / (9 * c_in)),
                "b": np.zeros(c_out),
            }
            s = {}
            if kind == LayerKind.CONV_BN_RELU:
                p["gamma"] = np.ones(c_out)
                p["beta"] = np.zeros(c_out)
                s = {"mean": np.zeros(c_out), "var": np.ones(c_out)}
            kinds.append(kind)
            params.append(p)
            stats.append(s)
        return cls(kinds, params, stats, noise_band)

    @classmethod
    def from_bundle(cls, bundle):
        kinds, params, stats = [], [], []
        for layer in bundle.layers:
            p = {"w": layer.weight.astype(np.float64), "b": layer.bias.astype(np.float64)}
            s = {}
            if layer.has_bn:
                p["gamma"] = layer.gamma.astype(np.float64)
                p["beta"] = layer.beta.astype(np.float64)
                s = {
                    "mean": layer.running_mean.astype(np.float64),
                    "var": layer.running_var.astype(np.float64),
                }
            kinds.append(layer.kind)
            params.append(p)
            stats.append(s)
        return cls(kinds, params, stats, bundle.noise_band)

    def to_bundle(self):
        layers = []
        for kind, p, s in zip(self.kinds, self.params, self.stats):
            extra = {}
            if kind == LayerKind.CONV_BN_RELU:
                extra = dict(
                    gamma=p["gamma"], beta=p["beta"],
                    running_mean=s["mean"], running_var=s["var"], bn_epsilon=BN_EPSILON,
                )
            layers.append(LayerSpec(kind, p["w"], p["b"], **extra))
        return WeightsBundle(tuple(layers), noise_band=self.noise_band)

    def copy(self):
        return Network(
            self.kinds,
            [{k: v.copy() for k, v in p.items()} for p in self.params],
            [{k: v.copy() for k, v in s.items()} for s in self.stats],
            self.noise_band,
        )

    def flat_parameters(self):
        """``[(layer, name, array), ...]`` in a fixed order."""
        return [(k, name, p[name]) for k, p in enumerate(self.params) for name in sorted(p)]


def _as_network(weights):
    if isinstance(weights, Network):
        return weights
    if isinstance(weights, WeightsBundle):
        return Network.from_bundle(weights)
    raise TypeError(f"expected a Network or WeightsBundle, got {type(weights).__name__}")


def _as_batch(batch):
    noisy, clean = (np.asarray(a, dtype=np.float64) for a in batch[:2])
    if noisy.ndim == 2:
        noisy, clean = noisy[None], clean[None]
    if noisy.shape != clean.shape or noisy.ndim != 3:
        raise ValueError(f"noisy {noisy.shape} and clean {clean.shape} batches must be (N, H, W)")
    if noisy.shape[0] == 0:
        raise ValueError("empty training batch")
    return noisy, clean


def forward(net, noisy, bn_mode="batch"):
    """Run the stack on a (N, H, W) batch; returns ``(output, tape)``."""
    if bn_mode not in ("batch", "inference"):
        raise ValueError(f"bn_mode must be 'batch' or 'inference', got {bn_mode!r}")
    x = noisy[:, None]
    tape = []
    last = len(net.kinds) - 1
    for k, (kind, p) in enumerate(zip(net.kinds, net.params)):
        z = kernels.conv_forward(x, p["w"], p["b"])
        rec = {"x": x}
        if kind == LayerKind.CONV_BN_RELU:
            if bn_mode == "batch":
                mu = z.mean(axis=(0, 2, 3))
                var = z.var(axis=(0, 2, 3))
            else:
                mu, var = net.stats[k]["mean"], net.stats[k]["var"]
            inv_std = 1.0 / np.sqrt(var + BN_EPSILON)
            xhat = (z - mu[None, :, None, None]) * inv_std[None, :, None, None]
            u = p["gamma"][None, :, None, None] * xhat + p["beta"][None, :, None, None]
            rec.update(xhat=xhat, inv_std=inv_std, mu=mu, var=var, m=z.shape[0] * z.shape[2] * z.shape[3])
        else:
            u = z
        if k != last:
            rec["mask"] = u > 0
            u = np.where(rec["mask"], u, 0.0)
        tape.append(rec)
        x = u
    return x[:, 0], tape


def training_loss(weights, batch, bn_mode="batch"):
    """Half mean squared error between predicted and true noise over the batch."""
    net = _as_network(weights)
    noisy, clean = _as_batch(batch)
    out, _ = forward(net, noisy, bn_mode)
    d = out - (noisy - clean)
    return float(np.sum(d * d)) / (2.0 * noisy.shape[0])


def loss_gradient(weights, batch, bn_mode="batch"):
    """Return ``(loss, grads)`` with ``grads`` shaped like ``net.params``."""
    net = _as_network(weights)
    noisy, clean = _as_batch(batch)
    n = noisy.shape[0]
    out, tape = forward(net, noisy, bn_mode)
    diff = out - (noisy - clean)
    loss = float(np.sum(diff * diff)) / (2.0 * n)
    g = (diff / n)[:, None]
    grads = [None] * len(net.kinds)
    for k in range(len(net.kinds) - 1, -1, -1):
        kind, p, rec = net.kinds[k], net.params[k], tape[k]
        if "mask" in rec:
            g = np.where(rec["mask"], g, 0.0)
        gk = {}
        if kind == LayerKind.CONV_BN_RELU:
            xhat = rec["xhat"]
            gk["gamma"] = np.sum(g * xhat, axis=(0, 2, 3))
            gk["beta"] = np.sum(g, axis=(0, 2, 3))
            gxhat = g * p["gamma"][None, :, None, None]
            inv_std = rec["inv_std"][None, :, None, None]
            if bn_mode == "batch":
                m = rec["m"]
                s1 = np.sum(gxhat, axis=(0, 2, 3))[None, :, None, None]
                s2 = np.sum(gxhat * xhat, axis=(0, 2, 3))[None, :, None, None]
                g = inv_std / m * (m * gxhat - s1 - xhat * s2)
            else:
                g = gxhat * inv_std
        gx, gk["w"], gk["b"] = kernels.conv_backward(rec["x"], p["w"], g)
        grads[k] = gk
        g = gx
    return loss, grads


def update_running_stats(net, noisy):
    """Blend batch statistics into the running ones (momentum 0.9)."""
    _, tape = forward(net, noisy, "batch")
    for k, rec in enumerate(tape):
        if "mu" in rec:
            m = rec["m"]
            unbiased = rec["var"] * m / max(m - 1, 1)
            st = net.stats[k]
            st["mean"] = BN_MOMENTUM * st["mean"] + (1 - BN_MOMENTUM) * rec["mu"]
            st["var"] = BN_MOMENTUM * st["var"] + (1 - BN_MOMENTUM) * unbiased


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(
            [{k: np.zeros_like(a) for k, a in p.items()} for p in params],
            [{k: np.zeros_like(a) for k, a in p.items()} for p in params],
            0,
        )


def adam_step(params, grads, state, hyper=None):
    """Bias-corrected Adam update; returns new ``(params, state)`` without mutating inputs."""
    hyper = hyper or AdamHyper()
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and Adam state have different layer counts")
    t = state.t + 1
    c1 = 1.0 - hyper.beta1 ** t
    c2 = 1.0 - hyper.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if set(p) != set(g) or set(p) != set(m):
            raise ValueError("gradient structure does not match parameters")
        pp, mm, vv = {}, {}, {}
        for name in p:
            if p[name].shape != g[name].shape or p[name].shape != m[name].shape:
                raise ValueError(f"shape mismatch for parameter {name!r}")
            mm[name] = hyper.beta1 * m[name] + (1.0 - hyper.beta1) * g[name]
            vv[name] = hyper.beta2 * v[name] + (1.0 - hyper.beta2) * g[name] * g[name]
            step = hyper.alpha * (mm[name] / c1) / (np.sqrt(vv[name] / c2) + hyper.eps)
            pp[name] = p[name] - step
        new_p.append(pp)
        new_m.append(mm)
        new_v.append(vv)
    return new_p, AdamState(new_m, new_v, t)


def sample_training_batch(corpus, cfg, rng):
    """Random crops with per-patch Gaussian noise.

    Each patch's noise variance is ``u * a_rms(source section)^2`` with ``u``
    uniform on ``cfg.noise_band``. Returns ``(noisy, clean, variances)``.
    """
    grids = [np.asarray(c, dtype=np.float64) for c in corpus]
    ps = cfg.patch_size
    if not grids or any(g.shape[0] < ps or g.shape[1] < ps for g in grids):
        raise ValueError(f"every corpus section must be at least {ps}x{ps}")
    lo, hi = cfg.noise_band
    noisy = np.empty((cfg.batch_size, ps, ps))
    clean = np.empty((cfg.batch_size, ps, ps))
    variances = np.empty(cfg.batch_size)
    for j in range(cfg.batch_size):
        g = grids[int(rng.integers(len(grids)))]
        r = int(rng.integers(g.shape[0] - ps + 1))
        c = int(rng.integers(g.shape[1] - ps + 1))
        patch = g[r:r + ps, c:c + ps]
        var = rng.uniform(lo, hi) * rms(g) ** 2
        clean[j] = patch
        noisy[j] = patch + math.sqrt(var) * rng.standard_normal((ps, ps))
        variances[j] = var
    return noisy, clean, variances


def normalize_pairs(noisy, clean):
    """Scale each pair so its noisy patch has unit RMS (the inference convention)."""
    a = np.sqrt(np.mean(noisy * noisy, axis=(1, 2)))
    a = np.where(a > 0, a, 1.0)[:, None, None]
    return noisy / a, clean / a


def smoothed(history, window=10):
    h = np.asarray(history, dtype=np.float64)
    if h.size < window:
        return h.copy()
    return np.convolve(h, np.ones(window) / window, mode="valid")


_F32_MAX = float(np.finfo(np.float32).max)


def _storable(net):
    """All parameters and statistics finite and representable in float32."""
    for group in (net.params, net.stats):
        for d in group:
            for a in d.values():
                if not np.all(np.abs(a) < _F32_MAX):
                    return False
    return True


def train(cfg, corpus, log=None, log_every=100):
    """Train from a seeded initialization; returns ``(bundle, loss_history)``."""
    net = Network.initialize(cfg.depth, cfg.channels, cfg.seed, cfg.noise_band)
    history = []
    if cfg.total_steps == 0:
        return net.to_bundle(), history
    rng = make_rng(cfg.seed, 0xBA7C)
    state = AdamState.zeros_like(net.params)
    for step in range(1, cfg.total_steps + 1):
        noisy, clean, _ = sample_training_batch(corpus, cfg, rng)
        noisy, clean = normalize_pairs(noisy, clean)
        loss, grads = loss_gradient(net, (noisy, clean), bn_mode="batch")
        if not math.isfinite(loss):
            raise TrainingDiverged(step)
        update_running_stats(net, noisy)
        net.params, state = adam_step(net.params, grads, state, cfg.adam)
        if not _storable(net):
            raise TrainingDiverged(step, f"parameters left the float32 range at step {step}")
        history.append(loss)
        if log is not None and (step % log_every == 0 or step == cfg.total_steps):
            log(f"step {step}/{cfg.total_steps} loss {loss:.6f}")
    return net.to_bundle(), history


def loss_history_csv(history):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss"])
    for k, v in enumerate(history, start=1):
        w.writerow([k, repr(float(v))])
    return buf.getvalue()


def write_loss_csv(path, history):
    atomic_write_text(path, loss_history_csv(history))
