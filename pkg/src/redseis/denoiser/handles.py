"""Denoiser handles, operator banks and per-input operator selection.

Every handle maps a 2D grid ``m`` to a clean estimate ``D(m)`` and exposes the
implied noise estimate ``residual(m) = m - D(m)``.
"""
import math
from pathlib import Path

import numpy as np

from ..section import SeismicSection, rms
from .dncnn import dncnn_residual
from .weights_io import load_weights

BUILTIN_BANK_DIR = Path(__file__).resolve().parent.parent / "data" / "bank"


def _grid(m):
    g = np.asarray(m, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"denoisers act on 2D grids, got shape {g.shape}")
    return g


class DenoiserHandle:
    """Base class; subclasses implement :meth:`denoise`."""

    kind = "abstract"

    def __init__(self, name=None):
        self.name = name or self.kind

    def denoise(self, m):
        raise NotImplementedError

    def residual(self, m):
        g = _grid(m)
        return g - self.denoise(g)

    def __call__(self, m):
        return self.denoise(m)

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r})"


class NullDenoiser(DenoiserHandle):
    """``D(m) = m``; makes the RED term vanish identically."""

    kind = "null"

    def denoise(self, m):
        return _grid(m).copy()

    def residual(self, m):
        return np.zeros_like(_grid(m))


def gaussian_kernel_1d(radius=2, sigma=1.0):
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


class GaussianBlurDenoiser(DenoiserHandle):
    """Separable Gaussian blur with circular boundaries (a symmetric linear operator)."""

    kind = "blur"

    def __init__(self, radius=2, sigma=1.0, name=None):
        if radius < 0 or not sigma > 0:
            raise ValueError(f"invalid blur parameters radius={radius}, sigma={sigma}")
        super().__init__(name or f"blur(r={radius},sigma={sigma:g})")
        self.radius = int(radius)
        self.sigma = float(sigma)
        self._taps = gaussian_kernel_1d(self.radius, self.sigma)

    def denoise(self, m):
        g = _grid(m)
        out = g
        for axis in (0, 1):
            acc = np.zeros_like(g)
            for k, tap in enumerate(self._taps):
                acc += tap * np.roll(out, k - self.radius, axis=axis)
            out = acc
        return out


class DnCNNDenoiser(DenoiserHandle):
    """Residual network denoiser ``D(m) = m - a * L(m / a)`` with ``a = rms(m)``.

    The amplitude normalization presents every input to the network at unit
    RMS, the convention the desk bank is trained under. An all-zero input is
    returned unchanged.
    """

    kind = "dncnn"

    def __init__(self, weights, name=None, normalize=True, fold_bn=False):
        super().__init__(name or f"dncnn(d={weights.depth},c={weights.channels})")
        self.weights = weights
        self.normalize = normalize
        self.fold_bn = fold_bn

    @property
    def noise_band(self):
        return self.weights.noise_band

    def network_residual(self, m):
        """Raw network output ``L(m)`` without amplitude normalization."""
        return dncnn_residual(self.weights, _grid(m), fold_bn=self.fold_bn)

    def residual(self, m):
        g = _grid(m)
        if not self.normalize:
            return self.network_residual(g)
        a = rms(g)
        if a == 0.0:
            return np.zeros_like(g)
        return a * self.network_residual(g / a)

    def denoise(self, m):
        g = _grid(m)
        return g - self.residual(g)


def denoise(handle, m):
    """Apply a handle; sections in give sections out."""
    out = handle.denoise(m)
    return SeismicSection(out) if isinstance(m, SeismicSection) else out


def _entries(spec):
    if isinstance(spec, (list, tuple)):
        for item in spec:
            yield from _entries(item)
        return
    for part in str(spec).split(","):
        part = part.strip()
        if part:
            yield part


def load_bank(spec):
    """Build an operator bank from a comma-separated spec or list of entries.

    Entries are ``null``, ``blur``, ``desk`` (the bundled desk-trained bank),
    a ``.dncw`` file, or a directory whose ``*.dncw`` files are loaded in name
    order. Missing paths raise :class:`FileNotFoundError`.
    """
    bank = []
    for entry in _entries(spec):
        low = entry.lower()
        if low == "null":
            bank.append(NullDenoiser())
        elif low == "blur":
            bank.append(GaussianBlurDenoiser())
        elif low == "desk":
            bank.extend(_load_dir(BUILTIN_BANK_DIR))
        else:
            path = Path(entry)
            if path.is_dir():
                bank.extend(_load_dir(path))
            elif path.is_file():
                bank.append(DnCNNDenoiser(load_weights(path), name=path.stem))
            else:
                raise FileNotFoundError(f"denoiser bank entry not found: {entry}")
    if not bank:
        raise ValueError(f"denoiser bank spec {spec!r} is empty")
    return bank


def _load_dir(path):
    files = sorted(Path(path).glob("*.dncw"))
    if not files:
        raise FileNotFoundError(f"no .dncw weight files in {path}")
    return [DnCNNDenoiser(load_weights(f), name=f.stem) for f in files]


def select_operator(bank, score):
    """Pick the bank member with the highest ``score(handle)``.

    ``score`` runs whatever evaluation the caller configures (direct
    application, a full solve, ...) and returns a float where larger is
    better; NaN counts as the worst score. Ties go to the lowest index.
    Returns ``(index, handle, score_value)``.
    """
    if not bank:
        raise ValueError("cannot select from an empty operator bank")
    best_i, best_v = None, None
    for i, handle in enumerate(bank):
        v = float(score(handle))
        if math.isnan(v):
            v = -math.inf
        if best_v is None or v > best_v:
            best_i, best_v = i, v
    return best_i, bank[best_i], best_v
