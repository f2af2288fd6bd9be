"""Synthetic seismic sections built from linear events.

Each event is a Ricker wavelet whose arrival time moves linearly across
channels, ``t(c) = intercept + slope * c``. Draws per event:

* intercept ~ U[0, n_time)            (samples)
* slope     ~ U[-1, 1]                (samples per channel)
* amplitude ~ U[0.5, 1.5] * (+-1)
* peak frequency fixed at ``peak_freq`` (fraction of Nyquist)

The summed section is scaled to unit RMS.
"""
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .fileio import atomic_write_text
from .rng import make_rng
from .section import SeismicSection, rms

DEFAULT_PEAK_FREQ = 0.2
DEFAULT_WAVELET_LEN = 31
AMPLITUDE_RANGE = (0.5, 1.5)
SLOPE_RANGE = (-1.0, 1.0)


@dataclass(frozen=True)
class EventSpec:
    intercept: float
    slope: float
    amplitude: float
    peak_freq: float = DEFAULT_PEAK_FREQ


def ricker_wavelet(peak_freq=DEFAULT_PEAK_FREQ, n_samples=DEFAULT_WAVELET_LEN):
    """Ricker wavelet centred in ``n_samples`` samples.

    ``peak_freq`` is a fraction of the Nyquist frequency, so the peak sits at
    ``peak_freq / 2`` cycles per sample.
    """
    if not 0 < peak_freq < 0.5:
        raise ValueError(f"peak_freq must lie in (0, 0.5) of Nyquist, got {peak_freq}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    f = 0.5 * peak_freq
    t = np.arange(n_samples, dtype=np.float64) - (n_samples - 1) / 2.0
    a = (math.pi * f * t) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def render_events(events, n_channels, n_time, wavelet_len=DEFAULT_WAVELET_LEN):
    """Sum events on the grid; fractional delays use linear interpolation."""
    grid = np.zeros((n_channels, n_time))
    t = np.arange(n_time, dtype=np.float64)
    half = (wavelet_len - 1) / 2.0
    support = np.arange(wavelet_len, dtype=np.float64)
    for ev in events:
        w = ricker_wavelet(ev.peak_freq, wavelet_len)
        for c in range(n_channels):
            centre = ev.intercept + ev.slope * c
            grid[c] += ev.amplitude * np.interp(t - centre + half, support, w, left=0.0, right=0.0)
    return grid


def draw_events(n_events, n_time, rng, peak_freq=DEFAULT_PEAK_FREQ):
    events = []
    for _ in range(n_events):
        intercept = rng.uniform(0.0, n_time)
        slope = rng.uniform(*SLOPE_RANGE)
        amplitude = rng.uniform(*AMPLITUDE_RANGE) * (1.0 if rng.random() < 0.5 else -1.0)
        events.append(EventSpec(float(intercept), float(slope), float(amplitude), peak_freq))
    return events


def generate_section(n_channels=32, n_time=32, n_events=4, rng=0, peak_freq=DEFAULT_PEAK_FREQ):
    """Random linear-event section at unit RMS; returns ``(section, events)``.

    ``rng`` is a :class:`numpy.random.Generator` or an integer seed.
    """
    if n_channels < 8 or n_time < 8:
        raise ValueError(f"section dims must be >= 8, got {n_channels}x{n_time}")
    if n_events < 1:
        raise ValueError(f"n_events must be >= 1, got {n_events}")
    gen = make_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    events = draw_events(n_events, n_time, gen, peak_freq)
    grid = render_events(events, n_channels, n_time)
    a = rms(grid)
    if a == 0.0:  # every event fell off the grid; cannot happen with intercepts inside it
        raise ValueError("generated an empty section")
    return SeismicSection(grid / a), events


def events_to_json(events, **meta):
    return json.dumps({**meta, "events": [asdict(e) for e in events]}, indent=2, sort_keys=True) + "\n"


def write_events_json(path, events, **meta):
    atomic_write_text(path, events_to_json(events, **meta))


def make_corpus(n_sections, n_channels=64, n_time=64, n_events=6, seed=0):
    """Deterministic list of training sections."""
    return [
        generate_section(n_channels, n_time, n_events, make_rng(seed, k))[0]
        for k in range(n_sections)
    ]
