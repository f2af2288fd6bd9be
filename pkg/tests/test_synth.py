import json

import numpy as np
import pytest

from redseis.rng import make_rng
from redseis.section import rms
from redseis.synth import (
    EventSpec,
    draw_events,
    events_to_json,
    generate_section,
    make_corpus,
    render_events,
    ricker_wavelet,
    write_events_json,
)


def test_ricker_shape():
    w = ricker_wavelet(0.2, 31)
    assert np.argmax(w) == 15 and w[15] == 1.0
    assert abs(w.sum()) <= 1e-3 * w.max()
    np.testing.assert_allclose(w, w[::-1], atol=1e-12)
    for bad in (0.0, 0.5, -0.1):
        with pytest.raises(ValueError):
            ricker_wavelet(bad)


def test_ricker_formula():
    # standard form (1 - 2 (pi f t)^2) exp(-(pi f t)^2) with f = 0.1 cycles/sample
    t = 3.0
    a = (np.pi * 0.1 * t) ** 2
    assert ricker_wavelet(0.2, 31)[15 + 3] == pytest.approx((1 - 2 * a) * np.exp(-a), rel=1e-14)


def test_flat_event_gives_identical_traces():
    g = render_events([EventSpec(10.0, 0.0, 1.0)], 8, 32)
    assert all(np.array_equal(g[0], row) for row in g)
    assert np.argmax(g[0]) == 10


def test_dipping_event_moves_peak():
    g = render_events([EventSpec(5.0, 1.0, 1.0)], 8, 32)
    assert [int(np.argmax(r)) for r in g] == [5 + c for c in range(8)]


def test_fractional_delay_interpolates():
    g = render_events([EventSpec(10.5, 0.0, 1.0)], 8, 32)
    w = ricker_wavelet()
    assert g[0, 10] == pytest.approx(0.5 * (w[15] + w[14]))


def test_generate_section_unit_rms_and_deterministic():
    a, ev_a = generate_section(32, 32, 4, rng=7)
    b, ev_b = generate_section(32, 32, 4, rng=7)
    assert a.shape == (32, 32)
    assert rms(a) == pytest.approx(1.0, abs=1e-6)
    assert a.samples.tobytes() == b.samples.tobytes() and ev_a == ev_b
    c, _ = generate_section(32, 32, 4, rng=8)
    assert c != a


def test_draw_ranges():
    events = draw_events(2000, 32, make_rng(1))
    slopes = np.array([e.slope for e in events])
    amps = np.abs([e.amplitude for e in events])
    inter = np.array([e.intercept for e in events])
    assert slopes.min() >= -1 and slopes.max() <= 1
    assert amps.min() >= 0.5 and amps.max() <= 1.5
    assert inter.min() >= 0 and inter.max() < 32
    signs = np.sign([e.amplitude for e in events])
    assert 0.4 < np.mean(signs > 0) < 0.6


def test_generate_section_validation():
    with pytest.raises(ValueError):
        generate_section(4, 32)
    with pytest.raises(ValueError):
        generate_section(32, 32, 0)


def test_events_json(tmp_path):
    _, events = generate_section(16, 16, 2, rng=0)
    d = json.loads(events_to_json(events, seed=0))
    assert d["seed"] == 0 and len(d["events"]) == 2
    write_events_json(tmp_path / "e.json", events)
    assert [EventSpec(**e) for e in json.loads((tmp_path / "e.json").read_text())["events"]] == events


def test_corpus():
    c = make_corpus(3, 16, 24, 3, seed=2)
    assert len(c) == 3 and all(s.shape == (16, 24) for s in c)
    assert make_corpus(3, 16, 24, 3, seed=2) == c
