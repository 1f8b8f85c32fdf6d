"""Deterministic lossy degradations: codec round trip, clipping, external tools."""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import Waveform, load_wav, resample, save_wav
from .errors import CapabilityError, ExternalToolError
from .lpc import DEFAULT_UNVOICED_SEED, lpc10_decode, lpc10_encode

DEGRADATION_KINDS = ("lpc10", "clip", "external")


@dataclass(frozen=True)
class DegradationSpec:
    """Which lossy transformation to apply, with its parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}, expected one of {DEGRADATION_KINDS}")
        if self.kind == "clip":
            frac = self.params.get("clip_fraction")
            if frac is None or not (0.0 < frac < 1.0):
                raise ValueError(f"clip requires clip_fraction in (0, 1), got {frac!r}")
        if self.kind == "external":
            template = self.params.get("command", "")
            if "{in}" not in template or "{out}" not in template:
                raise ValueError("external degradation needs a command template with {in} and {out}")


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) >= n:
        return x[:n]
    return np.concatenate([x, np.zeros(n - len(x))])


def clip_signal(w: Waveform, clip_fraction: float) -> Waveform:
    """Hard-limit at the per-utterance magnitude order statistic.

    The threshold is the ceil((1 - clip_fraction) * N)-th smallest |sample|,
    so roughly the top clip_fraction of samples by magnitude get clamped.
    An all-equal-magnitude input passes through unchanged by construction.
    """
    if not (0.0 < clip_fraction < 1.0):
        raise ValueError(f"clip_fraction must be in (0, 1), got {clip_fraction}")
    w.require_nonempty()
    n = len(w.samples)
    k = int(math.ceil((1.0 - clip_fraction) * n - 1e-12))
    tau = np.partition(np.abs(w.samples), k - 1)[k - 1]
    return Waveform(np.clip(w.samples, -tau, tau), w.sample_rate_hz)


def degrade_lpc10(w: Waveform, noise_seed: int = DEFAULT_UNVOICED_SEED) -> Waveform:
    """16 kHz -> 8 kHz codec round trip -> 16 kHz, length-preserving."""
    if w.sample_rate_hz != 16000:
        raise ValueError(f"lpc10 degradation expects 16 kHz input, got {w.sample_rate_hz}")
    w.require_nonempty()
    narrow = resample(w, 8000)
    decoded = lpc10_decode(lpc10_encode(narrow), noise_seed=noise_seed)
    wide = resample(decoded, 16000)
    return Waveform(_fit_length(wide.samples, len(w.samples)), w.sample_rate_hz)


def degrade_external(w: Waveform, command_template: str) -> Waveform:
    """Round-trip the waveform through an external codec command.

    The template must contain {in} and {out} placeholders; environment
    variables in it are expanded. The tool's output is resampled back to
    the input rate and cropped/padded to the input length.
    """
    if "{in}" not in command_template or "{out}" not in command_template:
        raise ValueError("command template must contain {in} and {out} placeholders")
    w.require_nonempty()

    with tempfile.TemporaryDirectory(prefix="wavemend-ext-") as tmp:
        in_path = Path(tmp) / "in.wav"
        out_path = Path(tmp) / "out.wav"
        save_wav(w, in_path)
        command = os.path.expandvars(command_template).format(**{"in": str(in_path), "out": str(out_path)})
        argv = shlex.split(command)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except FileNotFoundError as exc:
            raise CapabilityError(
                f"external tool {argv[0]!r} not found; install it or skip external-codec experiments"
            ) from exc
        if proc.returncode != 0:
            raise ExternalToolError(
                f"external command failed with exit code {proc.returncode}: {command}",
                returncode=proc.returncode,
                stdout=proc.stdout,
                stderr=proc.stderr,
            )
        if not out_path.exists():
            raise ExternalToolError(
                f"external command produced no output file: {command}",
                returncode=proc.returncode,
                stdout=proc.stdout,
                stderr=proc.stderr,
            )
        result = load_wav(out_path)

    if result.sample_rate_hz != w.sample_rate_hz:
        result = resample(result, w.sample_rate_hz)
    return Waveform(_fit_length(result.samples, len(w.samples)), w.sample_rate_hz)


def apply_degradation(w: Waveform, spec: DegradationSpec) -> Waveform:
    """Dispatch on the spec kind; every path preserves length and rate."""
    if spec.kind == "clip":
        return clip_signal(w, spec.params["clip_fraction"])
    if spec.kind == "lpc10":
        return degrade_lpc10(w, noise_seed=spec.params.get("noise_seed", DEFAULT_UNVOICED_SEED))
    return degrade_external(w, spec.params["command"])
