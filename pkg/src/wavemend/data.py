"""Dataset manifests and the in-memory training cache."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, load_wav
from .mel import MelConfig, mel_spectrogram


@dataclass
class ManifestEntry:
    id: str
    clean_path: str
    degraded_path: str | None = None
    split: str = "train"


def write_manifest(entries, path) -> None:
    """One JSON object per line: {id, clean_path, degraded_path, split}."""
    with open(path, "w") as fh:
        for e in entries:
            record = {k: v for k, v in asdict(e).items() if v is not None}
            fh.write(json.dumps(record) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: not valid JSON ({exc})") from exc
            if "id" not in record or "clean_path" not in record:
                raise ValueError(f"{path}:{line_no}: manifest rows need id and clean_path")
            entries.append(ManifestEntry(
                id=str(record["id"]),
                clean_path=record["clean_path"],
                degraded_path=record.get("degraded_path"),
                split=record.get("split", "train"),
            ))
    return entries


@dataclass
class TrainingUtterance:
    """One cached utterance: padded audio plus precomputed log-mels."""

    id: str
    clean_audio: np.ndarray
    clean_mel: np.ndarray
    degraded_audio: np.ndarray | None = None
    degraded_mel: np.ndarray | None = None

    @property
    def n_frames(self) -> int:
        return self.clean_mel.shape[1]


def _pad_to_frames(samples: np.ndarray, hop: int, min_frames: int) -> np.ndarray:
    needed = max(min_frames * hop, -(-len(samples) // hop) * hop)
    if len(samples) < needed:
        samples = np.concatenate([samples, np.zeros(needed - len(samples))])
    return samples


def load_training_set(entries, mel_config: MelConfig, *, need_degraded: bool,
                      min_frames: int, base_dir=None) -> list[TrainingUtterance]:
    """Load and mel-analyze every manifest row, padding short utterances.

    Clean and degraded sides are padded identically, so crops taken at a
    shared frame offset stay sample-aligned.
    """
    if not entries:
        raise ValueError("empty manifest")
    base = Path(base_dir) if base_dir else None
    out = []
    for e in entries:
        clean = _load(e.clean_path, base, mel_config)
        clean_samples = _pad_to_frames(clean.samples, mel_config.hop_length, min_frames)
        utt = TrainingUtterance(
            id=e.id,
            clean_audio=clean_samples,
            clean_mel=_mel_of(clean_samples, mel_config),
        )
        if need_degraded:
            if not e.degraded_path:
                raise ValueError(f"manifest row {e.id!r} is missing degraded_path")
            degraded = _load(e.degraded_path, base, mel_config)
            if len(degraded.samples) != len(clean.samples):
                raise ValueError(
                    f"utterance {e.id!r}: degraded length {len(degraded.samples)} "
                    f"!= clean length {len(clean.samples)}"
                )
            degraded_samples = _pad_to_frames(degraded.samples, mel_config.hop_length, min_frames)
            utt.degraded_audio = degraded_samples
            utt.degraded_mel = _mel_of(degraded_samples, mel_config)
        out.append(utt)
    return out


def _load(path, base, mel_config) -> Waveform:
    p = Path(path)
    if base and not p.is_absolute():
        p = base / p
    w = load_wav(p)
    if w.sample_rate_hz != mel_config.sample_rate_hz:
        raise ValueError(
            f"{p}: sample rate {w.sample_rate_hz} != configured {mel_config.sample_rate_hz}"
        )
    return w


def _mel_of(samples: np.ndarray, mel_config: MelConfig) -> np.ndarray:
    w = Waveform(samples, mel_config.sample_rate_hz)
    return mel_spectrogram(w, mel_config).values
