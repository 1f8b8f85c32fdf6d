"""Cross-module contracts: codec quality via the LSD oracle, spectrogram
band energy, training determinism, and teacher-matching sanity."""

import os

import numpy as np
import pytest
import torch
from scipy.signal import lfilter

from wavemend.audio import Waveform, save_wav
from wavemend.data import ManifestEntry, load_training_set
from wavemend.degrade import degrade_lpc10
from wavemend.lpc import lpc10_decode, lpc10_encode
from wavemend.metrics import external_metric, lsd, mcd
from wavemend.plots import spectrogram_db
from wavemend.synth import generate_utterance
from wavemend.training import MODE_CLEAN, train_deep_upsampler, train_vocoder
from wavemend.upsampler import DeepUpsampler
from wavemend.vocoder import VocoderConfig


def _vowel(fs, n, f0=110.0, seed=0):
    rng = np.random.default_rng(seed)
    x = np.zeros(n)
    x[:: int(fs / f0)] = 1.0
    for freq, bw in [(550, 110), (1650, 160), (2800, 250)]:
        r = np.exp(-np.pi * bw / fs)
        x = lfilter([1.0], [1.0, -2 * r * np.cos(2 * np.pi * freq / fs), r * r], x)
    x = 0.25 * x / np.max(np.abs(x))
    x += 0.005 * rng.standard_normal(n)
    return Waveform(x, fs)


def test_codec_output_closer_than_noise_by_lsd():
    vowel = _vowel(8000, 12000)
    decoded = lpc10_decode(lpc10_encode(vowel))
    decoded = Waveform(decoded.samples[: len(vowel)], 8000)

    rng = np.random.default_rng(1)
    rms = float(np.sqrt(np.mean(vowel.samples**2)))
    noise = Waveform(rms * rng.standard_normal(len(vowel)), 8000)

    assert lsd(vowel, decoded) < lsd(vowel, noise)


def test_lsd_and_mcd_symmetric():
    rng = np.random.default_rng(2)
    a = Waveform(0.1 * rng.standard_normal(4096), 16000)
    b = Waveform(0.1 * rng.standard_normal(4096), 16000)
    assert lsd(a, b) == pytest.approx(lsd(b, a), abs=1e-12)
    assert mcd(a, b) == pytest.approx(mcd(b, a), abs=1e-12)


def test_degraded_spectrogram_loses_high_band():
    clean, _ = generate_utterance(2024, 0)
    degraded = degrade_lpc10(clean)

    freqs = np.fft.rfftfreq(1024, d=1 / 16000)
    high = freqs > 4000.0

    def high_band_ratio(w):
        power = 10.0 ** (spectrogram_db(w) / 10.0)
        return float(power[high].sum() / power.sum())

    assert high_band_ratio(clean) > 0.01
    assert high_band_ratio(degraded) < 0.01


def test_vocoder_loss_trace_bitwise_deterministic(paired_corpus):
    root, _, entries = paired_corpus
    kw = dict(batch_size=2, crop_samples=4096, base_dir=root, log_every=0)
    a = train_vocoder(entries, MODE_CLEAN, VocoderConfig.tiny(), steps=3, seed=21, **kw)
    b = train_vocoder(entries, MODE_CLEAN, VocoderConfig.tiny(), steps=3, seed=21, **kw)
    assert a.losses == b.losses


def test_identity_degradation_beats_random_init(paired_corpus, tmp_path):
    root, manifest, entries = paired_corpus
    identity = [ManifestEntry(e.id, e.clean_path, e.clean_path) for e in entries]

    voc = tmp_path / "voc.pt"
    train_vocoder(identity, MODE_CLEAN, VocoderConfig.tiny(), steps=3, seed=30,
                  batch_size=2, crop_samples=4096, base_dir=root,
                  checkpoint_path=voc, log_every=0)
    res = train_deep_upsampler(identity, voc, steps=80, seed=31,
                               batch_size=1, crop_frames=16, base_dir=root, log_every=0)
    trained_loss = float(np.mean(res.losses[-10:]))

    from wavemend.training import load_checkpoint, reference_upsampler_from_checkpoint

    reference = reference_upsampler_from_checkpoint(load_checkpoint(voc))
    utts = load_training_set(identity, VocoderConfig.tiny().mel,
                             need_degraded=True, min_frames=16, base_dir=root)
    for init_seed in (91, 92, 93):
        torch.manual_seed(init_seed)
        fresh = DeepUpsampler()
        fresh.train()
        rng = np.random.default_rng(40)
        losses = []
        for _ in range(10):
            u = utts[int(rng.integers(len(utts)))]
            f0 = int(rng.integers(u.n_frames - 16 + 1))
            mel = torch.from_numpy(u.clean_mel[:, f0:f0 + 16][None].astype(np.float32))
            with torch.no_grad():
                losses.append((reference(mel) - fresh(mel)).abs().mean().item())
        assert trained_loss < float(np.mean(losses))


def test_four_copies_render_identical_panels(tmp_path):
    from wavemend.plots import plot_spectrogram_comparison

    w = _vowel(16000, 8192)
    specs = [spectrogram_db(w) for _ in range(4)]
    for s in specs[1:]:
        np.testing.assert_array_equal(s, specs[0])
    out = plot_spectrogram_comparison([w] * 4, ["a", "b", "c", "d"], tmp_path / "four.png")
    assert out.stat().st_size > 0


@pytest.mark.skipif("WAVEMEND_PESQ_CMD" not in os.environ,
                    reason="external PESQ tool not configured")
def test_pesq_identity_score(tmp_path):
    w = _vowel(16000, 16000)
    p = tmp_path / "same.wav"
    save_wav(w, p)
    score = external_metric(p, p, os.environ["WAVEMEND_PESQ_CMD"])
    assert score >= 4.4


@pytest.mark.skipif("WAVEMEND_AMR_CMD" not in os.environ,
                    reason="external AMR-NB codec not configured")
def test_amr_round_trip_band_limited():
    from wavemend.degrade import degrade_external

    t = np.arange(24000) / 16000
    tone = Waveform(0.3 * np.sin(2 * np.pi * 1000 * t), 16000)
    out = degrade_external(tone, os.environ["WAVEMEND_AMR_CMD"])
    spec = np.abs(np.fft.rfft(out.samples)) ** 2
    freqs = np.fft.rfftfreq(len(out.samples), d=1 / 16000)
    assert spec[freqs > 4000].sum() / spec.sum() < 0.01
