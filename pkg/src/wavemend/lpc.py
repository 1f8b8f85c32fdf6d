"""Simplified LPC-10-style speech codec at exactly 2400 bit/s.

Order-10 analysis over 180-sample frames at 8 kHz, voiced/unvoiced
excitation, and quantization in the log-area-ratio domain so decoded
filters stay stable by construction. Not bit-compatible with any
standardized LPC-10 variant; the rate, frame size, and excitation model
are what matter here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import Waveform
from .errors import BitstreamError, DegenerateFrameError

LPC_ORDER = 10
FRAME_SAMPLES = 180
CODEC_RATE_HZ = 8000
FRAME_BITS = 54
LAR_BIT_ALLOCATION = (5, 5, 5, 5, 4, 4, 4, 4, 3, 2)
LAR_CLAMP = 7.0
GAIN_BITS = 5
GAIN_DB_RANGE = (-60.0, 0.0)
PITCH_BITS = 7
PITCH_LAG_MIN = 20
PITCH_LAG_MAX = 147

# Voicing decision thresholds; adjustable per call on lpc10_encode.
ENERGY_FLOOR_DBFS = -60.0
VOICING_CONFIDENCE = 0.35
MAX_VOICED_ZCR = 0.3

DEFAULT_UNVOICED_SEED = 2400

_BITSTREAM_MAGIC = b"LPCX"
_BITSTREAM_VERSION = 1


@dataclass
class LpcFrame:
    """Unquantized per-frame codec parameters."""

    reflection_coeffs: np.ndarray
    gain: float
    pitch_lag: int
    voiced: bool

    def __post_init__(self):
        self.reflection_coeffs = np.asarray(self.reflection_coeffs, dtype=np.float64)
        if self.reflection_coeffs.shape != (LPC_ORDER,):
            raise ValueError(f"expected {LPC_ORDER} reflection coefficients")
        if np.any(np.abs(self.reflection_coeffs) >= 1.0):
            raise ValueError("reflection coefficients must lie strictly inside (-1, 1)")
        if self.gain < 0:
            raise ValueError("gain must be non-negative")
        if not self.voiced and self.pitch_lag != 0:
            raise ValueError("unvoiced frames must carry pitch_lag == 0")
        if self.voiced and not (PITCH_LAG_MIN <= self.pitch_lag <= PITCH_LAG_MAX):
            raise ValueError(f"voiced pitch lag {self.pitch_lag} outside "
                             f"[{PITCH_LAG_MIN}, {PITCH_LAG_MAX}]")


@dataclass(frozen=True)
class LpcBitstream:
    """Sequence of packed 54-bit frame records."""

    frames: tuple
    frame_duration_samples: int = FRAME_SAMPLES

    def __post_init__(self):
        for f in self.frames:
            if not (0 <= f < (1 << FRAME_BITS)):
                raise BitstreamError(f"frame record {f:#x} does not fit in {FRAME_BITS} bits")
        assert self.bit_rate_bps == 2400

    @property
    def bit_rate_bps(self) -> float:
        return FRAME_BITS * CODEC_RATE_HZ / self.frame_duration_samples

    @property
    def total_bits(self) -> int:
        return FRAME_BITS * len(self.frames)


def levinson_durbin(autocorr):
    """Solve the order-10 normal equations recursively.

    Returns (lpc_coeffs, reflection_coeffs, prediction_error) where the
    predictor convention is x_hat[n] = sum_i lpc_coeffs[i] * x[n-1-i].
    Raises DegenerateFrameError on a near-singular step; the caller is
    expected to substitute a silence frame.
    """
    r = np.asarray(autocorr, dtype=np.float64)
    if r.shape != (LPC_ORDER + 1,):
        raise ValueError(f"expected {LPC_ORDER + 1} autocorrelation values, got {r.shape}")
    if r[0] <= 0:
        raise ValueError("autocorr[0] must be positive")

    a = np.zeros(0)
    k_out = np.zeros(LPC_ORDER)
    err = r[0]
    for m in range(1, LPC_ORDER + 1):
        acc = r[m] - np.dot(a, r[m - 1:0:-1]) if m > 1 else r[1]
        k = acc / err
        if abs(1.0 - k * k) < 1e-12:
            raise DegenerateFrameError(f"near-singular step at order {m} (k={k})")
        new_a = np.empty(m)
        new_a[m - 1] = k
        if m > 1:
            new_a[:m - 1] = a - k * a[::-1]
        a = new_a
        k_out[m - 1] = k
        err *= 1.0 - k * k
    return a, k_out, err


def reflection_to_lpc(reflection_coeffs) -> np.ndarray:
    """Step-up recursion: reflection coefficients to predictor coefficients."""
    a = np.zeros(0)
    for k in np.asarray(reflection_coeffs, dtype=np.float64):
        m = len(a) + 1
        new_a = np.empty(m)
        new_a[m - 1] = k
        if m > 1:
            new_a[:m - 1] = a - k * a[::-1]
        a = new_a
    return a


def amdf_pitch(frame, lag_min: int = PITCH_LAG_MIN, lag_max: int = PITCH_LAG_MAX):
    """Average-magnitude-difference pitch estimate over the lag range.

    Prefers the fundamental over its multiples by jumping to a
    sub-multiple lag whenever its AMDF is nearly as low as the global
    minimum. Returns (lag, confidence) with confidence in [0, 1];
    an all-zero frame yields (lag_min, 0.0).
    """
    x = np.asarray(frame, dtype=np.float64)
    if len(x) < FRAME_SAMPLES:
        raise ValueError(f"need at least {FRAME_SAMPLES} samples, got {len(x)}")
    if len(x) <= lag_max:
        raise ValueError(f"frame of {len(x)} samples cannot evaluate lag {lag_max}")

    lags = np.arange(lag_min, lag_max + 1)
    amdf = np.array([np.mean(np.abs(x[lag:] - x[:-lag])) for lag in lags])
    mean_amdf = amdf.mean()
    if mean_amdf <= 0:
        return lag_min, 0.0

    best = int(np.argmin(amdf))
    floor = amdf[best] + 0.1 * (mean_amdf - amdf[best])
    for divisor in (4, 3, 2):
        cand = int(round((best + lag_min) / divisor)) - lag_min
        if cand < 0:
            continue
        window = amdf[max(cand - 1, 0):cand + 2]
        if window.min() <= floor:
            best = max(cand - 1, 0) + int(np.argmin(window))
            break

    confidence = float(max(0.0, 1.0 - amdf[best] / mean_amdf))
    return int(lags[best]), confidence


def _quantize_uniform(value, lo, hi, levels):
    idx = int(np.rint((value - lo) / (hi - lo) * (levels - 1)))
    return min(max(idx, 0), levels - 1)


def _dequantize_uniform(idx, lo, hi, levels):
    return lo + idx / (levels - 1) * (hi - lo)


def _lar_levels(bits: int) -> int:
    # Odd level count keeps an exact zero code (mid-tread quantizer).
    return (1 << bits) - 1


def quantize_frame(frame: LpcFrame):
    """LpcFrame -> (lar_indices, gain_index, pitch_index, voiced)."""
    lars = 2.0 * np.arctanh(np.clip(frame.reflection_coeffs, -0.999999, 0.999999))
    lars = np.clip(lars, -LAR_CLAMP, LAR_CLAMP)
    lar_idx = tuple(
        _quantize_uniform(lar, -LAR_CLAMP, LAR_CLAMP, _lar_levels(bits))
        for lar, bits in zip(lars, LAR_BIT_ALLOCATION)
    )
    if frame.gain > 0:
        gain_db = np.clip(20.0 * np.log10(frame.gain), *GAIN_DB_RANGE)
        gain_idx = _quantize_uniform(gain_db, *GAIN_DB_RANGE, 1 << GAIN_BITS)
    else:
        gain_idx = 0
    pitch_idx = frame.pitch_lag - PITCH_LAG_MIN if frame.voiced else 0
    return lar_idx, gain_idx, pitch_idx, frame.voiced


def dequantize_frame(lar_idx, gain_idx, pitch_idx, voiced):
    """Inverse of quantize_frame; gain index 0 decodes as exact silence."""
    lars = np.array([
        _dequantize_uniform(idx, -LAR_CLAMP, LAR_CLAMP, _lar_levels(bits))
        for idx, bits in zip(lar_idx, LAR_BIT_ALLOCATION)
    ])
    k = np.tanh(lars / 2.0)
    if gain_idx == 0:
        gain = 0.0
    else:
        gain = 10.0 ** (_dequantize_uniform(gain_idx, *GAIN_DB_RANGE, 1 << GAIN_BITS) / 20.0)
    lag = pitch_idx + PITCH_LAG_MIN if voiced else 0
    return LpcFrame(reflection_coeffs=k, gain=gain, pitch_lag=lag, voiced=voiced)


def pack_frame(lar_idx, gain_idx, pitch_idx, voiced) -> int:
    val = 0
    for idx, bits in zip(lar_idx, LAR_BIT_ALLOCATION):
        val = (val << bits) | idx
    val = (val << GAIN_BITS) | gain_idx
    val = (val << PITCH_BITS) | pitch_idx
    return (val << 1) | int(voiced)


def unpack_frame(record: int):
    voiced = bool(record & 1)
    record >>= 1
    pitch_idx = record & ((1 << PITCH_BITS) - 1)
    record >>= PITCH_BITS
    gain_idx = record & ((1 << GAIN_BITS) - 1)
    record >>= GAIN_BITS
    lar_idx = []
    for bits in reversed(LAR_BIT_ALLOCATION):
        lar_idx.append(record & ((1 << bits) - 1))
        record >>= bits
    return tuple(reversed(lar_idx)), gain_idx, pitch_idx, voiced


def _silence_frame() -> LpcFrame:
    return LpcFrame(np.zeros(LPC_ORDER), 0.0, 0, False)


def lpc10_encode(
    w: Waveform,
    *,
    energy_floor_dbfs: float = ENERGY_FLOOR_DBFS,
    voicing_confidence: float = VOICING_CONFIDENCE,
    max_zcr: float = MAX_VOICED_ZCR,
) -> LpcBitstream:
    """Encode an 8 kHz waveform; input is zero-padded to whole frames."""
    if w.sample_rate_hz != CODEC_RATE_HZ:
        raise ValueError(f"encoder expects {CODEC_RATE_HZ} Hz input, got {w.sample_rate_hz}")
    w.require_nonempty()

    n_frames = -(-len(w.samples) // FRAME_SAMPLES)
    x = np.concatenate([w.samples, np.zeros(n_frames * FRAME_SAMPLES - len(w.samples))])
    window = np.hamming(FRAME_SAMPLES)

    records = []
    prev_tail = np.zeros(LPC_ORDER)
    for i in range(n_frames):
        seg = x[i * FRAME_SAMPLES:(i + 1) * FRAME_SAMPLES]
        frame = _analyze_frame(
            seg, x, i, prev_tail, window,
            energy_floor_dbfs, voicing_confidence, max_zcr,
        )
        records.append(pack_frame(*quantize_frame(frame)))
        prev_tail = seg[-LPC_ORDER:]
    return LpcBitstream(frames=tuple(records))


def _analyze_frame(seg, x, i, prev_tail, window, energy_floor_dbfs,
                   voicing_confidence, max_zcr) -> LpcFrame:
    windowed = seg * window
    r = np.array([np.dot(windowed[:FRAME_SAMPLES - k], windowed[k:]) for k in range(LPC_ORDER + 1)])
    if r[0] <= 1e-20:
        return _silence_frame()
    try:
        a, k, _ = levinson_durbin(r)
    except DegenerateFrameError:
        return _silence_frame()
    if np.any(np.abs(k) >= 1.0):
        return _silence_frame()

    hist = np.concatenate([prev_tail, seg])
    residual = seg.copy()
    for j in range(1, LPC_ORDER + 1):
        residual -= a[j - 1] * hist[LPC_ORDER - j:LPC_ORDER - j + FRAME_SAMPLES]
    gain = float(np.sqrt(np.mean(residual**2)))

    rms = np.sqrt(np.mean(seg**2))
    dbfs = 20.0 * np.log10(rms) if rms > 0 else -np.inf
    end = (i + 1) * FRAME_SAMPLES
    buf = x[max(0, end - 320):end]
    if len(buf) < 320:
        buf = np.concatenate([np.zeros(320 - len(buf)), buf])
    lag, confidence = amdf_pitch(buf)
    zcr = float(np.mean(np.signbit(seg[1:]) != np.signbit(seg[:-1])))

    voiced = (dbfs > energy_floor_dbfs) and (confidence > voicing_confidence) and (zcr < max_zcr)
    return LpcFrame(
        reflection_coeffs=k,
        gain=gain,
        pitch_lag=lag if voiced else 0,
        voiced=voiced,
    )


def lpc10_decode(b: LpcBitstream, noise_seed: int = DEFAULT_UNVOICED_SEED) -> Waveform:
    """Synthesize 8 kHz audio from a bitstream.

    Voiced frames use a pitch-period impulse train whose phase carries
    across consecutive voiced frames; unvoiced frames use seeded white
    noise. Excitation is scaled to the decoded gain, and the all-pole
    filter state persists across frame boundaries.
    """
    rng = np.random.default_rng(noise_seed)
    state = np.zeros(LPC_ORDER)
    next_pulse = 0
    out = np.empty(len(b.frames) * FRAME_SAMPLES)

    for i, record in enumerate(b.frames):
        frame = dequantize_frame(*unpack_frame(record))
        exc = np.zeros(FRAME_SAMPLES)
        if frame.voiced and frame.gain > 0:
            positions = np.arange(next_pulse, FRAME_SAMPLES, frame.pitch_lag)
            exc[positions] = 1.0
            next_pulse = int(positions[-1]) + frame.pitch_lag - FRAME_SAMPLES
            exc *= frame.gain / np.sqrt(len(positions) / FRAME_SAMPLES)
        else:
            next_pulse = 0
            if frame.gain > 0:
                noise = rng.standard_normal(FRAME_SAMPLES)
                exc = noise * (frame.gain / np.sqrt(np.mean(noise**2)))

        a_poly = np.concatenate([[1.0], -reflection_to_lpc(frame.reflection_coeffs)])
        y, state = lfilter([1.0], a_poly, exc, zi=state)
        out[i * FRAME_SAMPLES:(i + 1) * FRAME_SAMPLES] = y
    return Waveform(out, CODEC_RATE_HZ)


def write_lpc_bitstream(b: LpcBitstream, path) -> None:
    """File layout: magic, version byte, u32 LE frame count, 7 bytes/frame."""
    with open(path, "wb") as fh:
        fh.write(_BITSTREAM_MAGIC)
        fh.write(bytes([_BITSTREAM_VERSION]))
        fh.write(struct.pack("<I", len(b.frames)))
        for record in b.frames:
            fh.write((record << 2).to_bytes(7, "big"))


def read_lpc_bitstream(path) -> LpcBitstream:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _BITSTREAM_MAGIC:
        raise BitstreamError(f"{path}: bad magic {data[:4]!r}")
    if data[4] != _BITSTREAM_VERSION:
        raise BitstreamError(f"{path}: unsupported version {data[4]}")
    (count,) = struct.unpack("<I", data[5:9])
    body = data[9:]
    if len(body) != 7 * count:
        raise BitstreamError(f"{path}: expected {7 * count} frame bytes, found {len(body)}")
    records = []
    for i in range(count):
        chunk = int.from_bytes(body[7 * i:7 * (i + 1)], "big")
        if chunk & 0b11:
            raise BitstreamError(f"{path}: nonzero pad bits in frame {i}")
        records.append(chunk >> 2)
    return LpcBitstream(frames=tuple(records))
