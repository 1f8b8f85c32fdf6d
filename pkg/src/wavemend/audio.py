"""Waveform container, 16-bit PCM WAV I/O, and polyphase resampling."""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import upfirdn

from .errors import AudioFormatError

INT16_SCALE = 32768.0


@dataclass
class Waveform:
    """Mono audio signal with amplitudes nominally in [-1.0, 1.0)."""

    samples: np.ndarray
    sample_rate_hz: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"expected mono 1-D samples, got shape {self.samples.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def require_nonempty(self):
        if len(self.samples) == 0:
            raise ValueError("operation requires a non-empty waveform")


def load_wav(path) -> Waveform:
    """Read a 16-bit PCM WAV file, averaging channels down to mono.

    Integer samples are scaled by 1/32768, so the result lies in
    [-1.0, 1.0). Raises AudioFormatError for anything that is not
    16-bit integer PCM.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise AudioFormatError(f"{path}: compressed WAV ({wf.getcomptype()}) not supported")
            if wf.getsampwidth() != 2:
                raise AudioFormatError(
                    f"{path}: only 16-bit PCM supported, got {8 * wf.getsampwidth()}-bit"
                )
            n_channels = wf.getnchannels()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file ({exc})") from exc

    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / INT16_SCALE
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return Waveform(samples=data, sample_rate_hz=rate)


def save_wav(w: Waveform, path) -> None:
    """Write a mono 16-bit PCM WAV; samples are clamped then rounded."""
    ints = np.clip(np.rint(w.samples * INT16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate_hz)
        wf.writeframes(ints.tobytes())


def _design_lowpass(cutoff_hz: float, fs_hz: float, numtaps: int) -> np.ndarray:
    """Kaiser-windowed sinc lowpass with exactly unit DC gain."""
    n = np.arange(numtaps) - (numtaps - 1) / 2
    h = np.sinc(2.0 * cutoff_hz / fs_hz * n) * np.kaiser(numtaps, 8.6)
    return h / h.sum()


def resample(w: Waveform, target_rate_hz: int) -> Waveform:
    """Polyphase windowed-sinc resampling between rationally related rates.

    The anti-alias cutoff sits at 0.45x the lower of the two rates
    (0.9 of its Nyquist). Output length is round(len * target/source),
    rounding halves up.
    """
    if target_rate_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate_hz}")
    source = w.sample_rate_hz
    if target_rate_hz == source:
        return Waveform(w.samples.copy(), source)

    g = math.gcd(source, target_rate_hz)
    up, down = target_rate_hz // g, source // g
    n = len(w.samples)
    out_len = (2 * n * up + down) // (2 * down)
    if n == 0:
        return Waveform(np.zeros(0), target_rate_hz)

    fs_up = source * up
    cutoff = 0.45 * min(source, target_rate_hz)
    numtaps = 2 * 32 * max(up, down) + 1
    h = _design_lowpass(cutoff, fs_up, numtaps) * up

    # Prepend zeros so the group delay is an integer number of output
    # samples, then flush the filter with trailing zeros on the input.
    delay_up = (numtaps - 1) // 2
    front_pad = (-delay_up) % down
    h = np.concatenate([np.zeros(front_pad), h])
    offset = (delay_up + front_pad) // down
    tail = int(np.ceil(len(h) / up)) + down
    x = np.concatenate([w.samples, np.zeros(tail)])

    y = upfirdn(h, x, up=up, down=down)
    return Waveform(y[offset:offset + out_len], target_rate_hz)
