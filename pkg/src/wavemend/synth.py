"""Desk-scale synthetic speech corpus.

Utterances alternate voiced stretches (harmonic pulse trains with a
drifting fundamental, shaped by formant-like resonators) and unvoiced
noise bursts, enough spectral structure for codec and vocoder smoke
tests. Generation is fully determined by (seed, index).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import Waveform, save_wav
from .data import ManifestEntry, write_manifest

SAMPLE_RATE = 16000
F0_RANGE = (110.0, 280.0)


def _resonator_cascade(x, rng, fs):
    f1 = rng.uniform(300, 850)
    f2 = rng.uniform(f1 + 400, 2300)
    f3 = rng.uniform(2400, 3400)
    for freq, bw in ((f1, rng.uniform(80, 180)), (f2, rng.uniform(100, 220)), (f3, rng.uniform(150, 280))):
        r = np.exp(-np.pi * bw / fs)
        x = lfilter([1.0], [1.0, -2 * r * np.cos(2 * np.pi * freq / fs), r * r], x)
    return x


def _voiced_segment(rng, n, fs):
    t = np.arange(n) / fs
    f0_base = rng.uniform(*F0_RANGE)
    f0 = f0_base * (
        1.0
        + 0.04 * np.sin(2 * np.pi * rng.uniform(2.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
        + 0.03 * np.sin(2 * np.pi * rng.uniform(0.4, 1.2) * t + rng.uniform(0, 2 * np.pi))
    )
    f0 = np.clip(f0, 100.0, 300.0)
    phase = np.cumsum(f0 / fs)
    pulses = np.diff(np.floor(phase), prepend=0.0) > 0
    x = _resonator_cascade(pulses.astype(np.float64), rng, fs)
    return x / (np.max(np.abs(x)) + 1e-12)


def _unvoiced_segment(rng, n):
    noise = rng.standard_normal(n)
    x = noise - 0.95 * np.concatenate([[0.0], noise[:-1]])
    return 0.3 * x / (np.max(np.abs(x)) + 1e-12)


def _fade(n, fs, ms=10.0):
    k = min(int(fs * ms / 1000), n // 2)
    env = np.ones(n)
    if k > 0:
        ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, k))
        env[:k] = ramp
        env[-k:] = ramp[::-1]
    return env


def generate_utterance(seed: int, index: int, fs: int = SAMPLE_RATE):
    """Returns (Waveform, voiced_spans) where spans are (start, end) samples."""
    rng = np.random.default_rng([seed, index])
    total = int(rng.uniform(1.2, 3.0) * fs)
    pieces = []
    voiced_spans = []
    pos = int(0.02 * fs)
    pieces.append(np.zeros(pos))
    voiced_turn = True
    while pos < total:
        if voiced_turn:
            n = int(rng.uniform(0.2, 0.45) * fs)
            seg = _voiced_segment(rng, n, fs)
            voiced_spans.append((pos, pos + n))
        else:
            n = int(rng.uniform(0.05, 0.12) * fs)
            seg = _unvoiced_segment(rng, n)
        seg = seg * _fade(n, fs) * rng.uniform(0.6, 1.0)
        pieces.append(seg)
        pos += n
        voiced_turn = not voiced_turn if rng.uniform() < 0.85 else voiced_turn
    x = np.concatenate(pieces)[:total]

    target_rms = rng.uniform(0.06, 0.18)
    x = x * (target_rms / (np.sqrt(np.mean(x**2)) + 1e-12))
    peak = np.max(np.abs(x))
    if peak > 0.9:
        x = x * (0.9 / peak)
    voiced_spans = [(a, min(b, total)) for a, b in voiced_spans if a < total]
    return Waveform(x, fs), voiced_spans


def generate_corpus(n: int, seed: int, out_dir, manifest_name: str = "manifest.jsonl"):
    """Write n utterances plus a manifest; returns the manifest path."""
    if n < 1:
        raise ValueError("need at least one utterance")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        w, _ = generate_utterance(seed, i)
        name = f"utt{i:04d}.wav"
        save_wav(w, out / name)
        entries.append(ManifestEntry(id=f"utt{i:04d}", clean_path=name))
    manifest_path = out / manifest_name
    write_manifest(entries, manifest_path)
    return manifest_path
