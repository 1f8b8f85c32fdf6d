"""Log-mel extraction: shape law, log floor, filterbank placement."""

import math

import numpy as np
import pytest

from wavemend.audio import Waveform
from wavemend.mel import (
    LOG_MEL_FLOOR,
    MelConfig,
    mel_band_centers_hz,
    mel_filterbank,
    mel_spectrogram,
    stft_magnitude,
)

CFG = MelConfig()


def test_all_zero_waveform_hits_log_floor():
    m = mel_spectrogram(Waveform(np.zeros(4096), 16000), CFG)
    np.testing.assert_allclose(m.values, math.log(LOG_MEL_FLOOR))


def test_frame_count_exact():
    m = mel_spectrogram(Waveform(np.random.default_rng(0).standard_normal(2560) * 0.1, 16000), CFG)
    assert m.values.shape == (80, 10)


@pytest.mark.parametrize("length", [1, 2, 255, 256, 257, 1000, 2560, 2561, 16000])
def test_shape_law_every_length(length):
    w = Waveform(np.random.default_rng(length).standard_normal(length) * 0.1, 16000)
    m = mel_spectrogram(w, CFG)
    assert m.values.shape == (80, math.ceil(length / 256))


def test_log_floor_global():
    rng = np.random.default_rng(42)
    for _ in range(5):
        w = Waveform(rng.uniform(-1, 1, size=5000), 16000)
        m = mel_spectrogram(w, CFG)
        assert m.values.min() >= math.log(LOG_MEL_FLOOR) - 1e-9


def test_pure_tone_lands_in_nearest_band():
    # Independent oracle: recompute the triangular band centers from the
    # slaney piecewise mel scale definition.
    def hz_to_mel(hz):
        return 3 * hz / 200 if hz < 1000 else 15 + math.log(hz / 1000) * 27 / math.log(6.4)

    def mel_to_hz(mel):
        return 200 * mel / 3 if mel < 15 else 1000 * math.exp(math.log(6.4) * (mel - 15) / 27)

    pts = np.linspace(hz_to_mel(20.0), hz_to_mel(8000.0), 82)
    centers = np.array([mel_to_hz(m) for m in pts[1:-1]])
    np.testing.assert_allclose(mel_band_centers_hz(CFG), centers, rtol=1e-12)
    expected_bin = int(np.argmin(np.abs(centers - 1000.0)))

    t = np.arange(16000) / 16000
    m = mel_spectrogram(Waveform(0.4 * np.sin(2 * np.pi * 1000 * t), 16000), CFG)
    per_frame_argmax = m.values.argmax(axis=0)
    assert np.all(per_frame_argmax == per_frame_argmax[0])
    assert abs(int(per_frame_argmax[0]) - expected_bin) <= 1


def test_filterbank_rows_cover_band():
    fb = mel_filterbank(CFG)
    assert fb.shape == (80, 513)
    assert np.all(fb >= 0)
    assert np.all(fb.sum(axis=1) > 0)


def test_stft_matches_naive_dft():
    # Brute-force single-frame oracle: one hop of a short signal.
    rng = np.random.default_rng(9)
    x = rng.standard_normal(256) * 0.1
    mag = stft_magnitude(Waveform(x, 16000), CFG)
    assert mag.shape == (513, 1)

    padded = np.pad(x, (0, 0), mode="reflect")
    padded = np.pad(padded, (384, 384), mode="reflect")
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(1024) / 1024)
    frame = padded[:1024] * window
    k = np.arange(513)[:, None]
    n = np.arange(1024)[None, :]
    dft = (frame[None, :] * np.exp(-2j * np.pi * k * n / 1024)).sum(axis=1)
    np.testing.assert_allclose(mag[:, 0], np.abs(dft), atol=1e-9)


def test_rate_mismatch_rejected():
    with pytest.raises(ValueError):
        mel_spectrogram(Waveform(np.zeros(100), 8000), CFG)


def test_empty_rejected():
    with pytest.raises(ValueError):
        mel_spectrogram(Waveform(np.zeros(0), 16000), CFG)
