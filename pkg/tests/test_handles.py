import math

import numpy as np
import pytest

from redseis.denoiser import (
    BUILTIN_BANK_DIR,
    DnCNNDenoiser,
    GaussianBlurDenoiser,
    NullDenoiser,
    denoise,
    load_bank,
    save_weights,
    select_operator,
)
from redseis.section import SeismicSection
from conftest import random_bundle


def test_null():
    m = np.random.default_rng(0).standard_normal((4, 5))
    h = NullDenoiser()
    assert np.array_equal(h(m), m)
    assert not h.residual(m).any()


def test_blur_is_symmetric_linear():
    h = GaussianBlurDenoiser()
    n = 8
    basis = np.eye(n * n).reshape(n * n, n, n)
    mat = np.stack([h.denoise(e).ravel() for e in basis], axis=1)
    np.testing.assert_allclose(mat, mat.T, atol=1e-15)
    np.testing.assert_allclose(mat.sum(axis=0), 1.0)  # preserves the mean
    with pytest.raises(ValueError):
        GaussianBlurDenoiser(sigma=0)


def test_dncnn_handle_normalization():
    b = random_bundle()
    h = DnCNNDenoiser(b)
    m = np.random.default_rng(1).standard_normal((10, 10)) * 3.0
    a = math.sqrt(np.mean(m * m))
    np.testing.assert_allclose(h.residual(m), a * h.network_residual(m / a), atol=1e-12)
    np.testing.assert_allclose(h.denoise(m), m - h.residual(m))
    # the wrapped map is exactly positively homogeneous
    np.testing.assert_allclose(h.residual(2.5 * m), 2.5 * h.residual(m), rtol=1e-12, atol=1e-12)
    assert not h.residual(np.zeros((4, 4))).any()
    raw = DnCNNDenoiser(b, normalize=False)
    np.testing.assert_allclose(raw.residual(m), h.network_residual(m))


def test_denoise_keeps_type():
    s = SeismicSection(np.ones((4, 4)))
    assert isinstance(denoise(NullDenoiser(), s), SeismicSection)
    assert isinstance(denoise(NullDenoiser(), np.ones((4, 4))), np.ndarray)
    with pytest.raises(ValueError):
        NullDenoiser().denoise(np.ones(4))


def test_load_bank_specs(tmp_path):
    for k in range(2):
        save_weights(random_bundle(seed=k), tmp_path / f"n{k}.dncw")
    bank = load_bank(f"null, blur,{tmp_path}")
    assert [h.name for h in bank] == ["null", bank[1].name, "n0", "n1"]
    assert isinstance(bank[1], GaussianBlurDenoiser)
    assert len(load_bank([str(tmp_path / "n1.dncw"), "null"])) == 2
    with pytest.raises(FileNotFoundError):
        load_bank(str(tmp_path / "missing.dncw"))
    with pytest.raises(ValueError):
        load_bank("")


def test_builtin_bank_ships():
    files = sorted(BUILTIN_BANK_DIR.glob("*.dncw"))
    assert len(files) >= 2
    bank = load_bank("desk")
    assert len(bank) == len(files)
    bands = [h.noise_band for h in bank]
    assert len(set(bands)) == len(bands)


def test_select_operator():
    bank = ["a", "b", "c", "d"]
    scores = {"a": 1.0, "b": 3.0, "c": 3.0, "d": float("nan")}
    assert select_operator(bank, scores.get) == (1, "b", 3.0)
    assert select_operator(["x"], lambda h: float("nan"))[2] == -math.inf
    with pytest.raises(ValueError):
        select_operator([], lambda h: 0.0)
