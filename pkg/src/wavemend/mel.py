"""STFT framing and log-mel spectrogram extraction.

The framing policy pads the waveform (reflect) to a whole number of hops
and then by (n_fft - hop)/2 on each side, so every length-L input yields
exactly ceil(L / hop) frames. All downstream conditioner shapes rely on
this law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .audio import Waveform

LOG_MEL_FLOOR = 1e-5


@dataclass(frozen=True)
class MelConfig:
    sample_rate_hz: int = 16000
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    fmin_hz: float = 20.0
    fmax_hz: float = 8000.0
    mel_floor: float = LOG_MEL_FLOOR

    def __post_init__(self):
        if self.hop_length <= 0 or self.n_fft <= 0 or self.n_mels <= 0:
            raise ValueError("mel config sizes must be positive")
        if self.win_length > self.n_fft:
            raise ValueError("win_length must not exceed n_fft")


@dataclass
class MelSpectrogram:
    """Log-mel energies, shape [n_mels, n_frames], natural-log scale."""

    values: np.ndarray
    n_mels: int
    hop_length: int
    sample_rate_hz: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.n_mels:
            raise ValueError(f"expected [n_mels x frames] values, got {self.values.shape}")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def _hz_to_mel(hz):
    """Slaney scale: linear below 1 kHz, logarithmic above."""
    hz = np.asarray(hz, dtype=np.float64)
    mel = 3.0 * hz / 200.0
    log_region = hz >= 1000.0
    mel = np.where(log_region, 15.0 + np.log(np.maximum(hz, 1e-12) / 1000.0) * 27.0 / np.log(6.4), mel)
    return mel


def _mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    hz = 200.0 * mel / 3.0
    log_region = mel >= 15.0
    return np.where(log_region, 1000.0 * np.exp(np.log(6.4) * (mel - 15.0) / 27.0), hz)


def mel_filterbank(config: MelConfig) -> np.ndarray:
    """Triangular mel filters [n_mels x (n_fft/2 + 1)], slaney area-normalized."""
    mel_pts = np.linspace(_hz_to_mel(config.fmin_hz), _hz_to_mel(config.fmax_hz), config.n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    freqs = np.fft.rfftfreq(config.n_fft, d=1.0 / config.sample_rate_hz)

    lower = hz_pts[:-2, None]
    center = hz_pts[1:-1, None]
    upper = hz_pts[2:, None]
    rise = (freqs[None, :] - lower) / (center - lower)
    fall = (upper - freqs[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rise, fall))
    fb *= 2.0 / (upper - lower)
    return fb


def mel_band_centers_hz(config: MelConfig) -> np.ndarray:
    """Center frequency of each triangular filter, in Hz."""
    mel_pts = np.linspace(_hz_to_mel(config.fmin_hz), _hz_to_mel(config.fmax_hz), config.n_mels + 2)
    return _mel_to_hz(mel_pts)[1:-1]


def _reflect_pad(x: np.ndarray, before: int, after: int) -> np.ndarray:
    if len(x) > 1:
        return np.pad(x, (before, after), mode="reflect")
    return np.pad(x, (before, after), mode="edge")


def stft_magnitude(w: Waveform, config: MelConfig) -> np.ndarray:
    """Magnitude STFT [(n_fft/2 + 1) x ceil(L/hop)] under the shared framing policy."""
    w.require_nonempty()
    if w.sample_rate_hz != config.sample_rate_hz:
        raise ValueError(
            f"waveform rate {w.sample_rate_hz} != mel config rate {config.sample_rate_hz}"
        )
    x = w.samples
    hop, win_len, n_fft = config.hop_length, config.win_length, config.n_fft
    n_frames = math.ceil(len(x) / hop)

    x = _reflect_pad(x, 0, n_frames * hop - len(x))
    side = (n_fft - hop) // 2
    x = _reflect_pad(x, side, side)

    window = get_window("hann", win_len, fftbins=True)
    idx = hop * np.arange(n_frames)[:, None] + np.arange(win_len)[None, :]
    frames = x[idx] * window
    return np.abs(np.fft.rfft(frames, n=n_fft, axis=1)).T


def mel_spectrogram(w: Waveform, config: MelConfig) -> MelSpectrogram:
    """Log-mel spectrogram; entries are ln(max(mel energy, mel_floor))."""
    mag = stft_magnitude(w, config)
    mel = mel_filterbank(config) @ mag
    values = np.log(np.maximum(mel, config.mel_floor))
    return MelSpectrogram(
        values=values,
        n_mels=config.n_mels,
        hop_length=config.hop_length,
        sample_rate_hz=config.sample_rate_hz,
    )
