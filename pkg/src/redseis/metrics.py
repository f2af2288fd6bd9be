"""Reconstruction quality, SNR-calibrated noise and local homogeneity."""
import math
from dataclasses import dataclass

import numpy as np

from .rng import make_rng
from .section import SeismicSection, rms


def quality_q(est, truth):
    """Quality of reconstruction in dB, ``10 log10(|truth|^2 / |est - truth|^2)``.

    Returns ``math.inf`` when ``est`` equals ``truth`` exactly.
    """
    e = np.asarray(est, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if e.shape != t.shape:
        raise ValueError(f"shape mismatch: estimate {e.shape} vs truth {t.shape}")
    signal = float(np.sum(t * t))
    if signal == 0.0:
        raise ValueError("quality_q is undefined for an all-zero truth")
    d = e - t
    err = float(np.sum(d * d))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(signal / err)


@dataclass(frozen=True)
class NoiseSpec:
    """White Gaussian noise at a linear power SNR, ``snr = a_rms**2 / sigma_sq``.

    ``sigma_sq`` is the noise variance; leave it ``None`` to derive it from the
    clean signal when noise is added.
    """

    snr: float
    seed: int = 0
    sigma_sq: float | None = None

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if self.sigma_sq is not None and not self.sigma_sq > 0:
            raise ValueError(f"sigma_sq must be positive, got {self.sigma_sq}")

    @classmethod
    def for_signal(cls, clean, snr, seed=0):
        return cls(snr=snr, seed=seed, sigma_sq=noise_variance(clean, snr))


def noise_variance(clean, snr):
    a = rms(clean)
    if a == 0.0:
        raise ValueError("cannot calibrate noise against an all-zero signal")
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    return a * a / snr


def gaussian_noise(shape, sigma_sq, rng):
    return math.sqrt(sigma_sq) * rng.standard_normal(shape)


def add_noise_for_snr(clean, spec, rng=None):
    """Return ``clean`` plus i.i.d. N(0, a_rms^2 / snr) noise.

    The noise is drawn from ``make_rng(spec.seed)`` unless an explicit
    generator is passed. Sections come back as sections, arrays as arrays.
    """
    c = np.asarray(clean, dtype=np.float64)
    sigma_sq = noise_variance(c, spec.snr)
    if spec.sigma_sq is not None and not math.isclose(spec.sigma_sq, sigma_sq, rel_tol=1e-9):
        raise ValueError(
            f"NoiseSpec.sigma_sq={spec.sigma_sq} disagrees with a_rms^2/snr={sigma_sq}"
        )
    gen = rng if rng is not None else make_rng(spec.seed)
    noisy = c + gaussian_noise(c.shape, sigma_sq, gen)
    return SeismicSection(noisy) if isinstance(clean, SeismicSection) else noisy


def lh_factor(residual_op, s, epsilon=1e-3):
    """Local homogeneity violation ``|L(s + eps s) - (1 + eps) L(s)|^2 / |L(s)|^2``."""
    s = np.asarray(s, dtype=np.float64)
    base = np.asarray(residual_op(s), dtype=np.float64)
    denom = float(np.sum(base * base))
    if denom == 0.0:
        raise ZeroDivisionError("lh factor is undefined: residual operator returned zero")
    moved = np.asarray(residual_op(s + epsilon * s), dtype=np.float64)
    d = moved - (1.0 + epsilon) * base
    return float(np.sum(d * d)) / denom


def metric_record(metric, value, seed=None, **params):
    """JSON-ready metric record; infinities become the strings ``"inf"``/``"-inf"``."""
    return {"metric": metric, "value": json_float(value), "seed": seed, "params": params}


def json_float(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return v

