"""Two-stage training: the diffusion vocoder, then the deep CNN upsampler
matched against the frozen reference upsampler. Checkpoints carry enough
state (model, optimizer, RNG) that resuming reproduces the uninterrupted
run bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .data import ManifestEntry, load_training_set
from .errors import DependencyError
from .mel import MelConfig
from .upsampler import DeepUpsampler
from .vocoder import ReferenceUpsampler, VocoderConfig, VocoderModel

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
MODE_CLEAN = "clean-conditioner"
MODE_DEGRADED = "degraded-conditioner"

DEFAULT_VOCODER_LR = 2e-4
DEFAULT_UPSAMPLER_LR = 1e-3
DEFAULT_CROP_SAMPLES = 16384
DEFAULT_UPSAMPLER_CROP_FRAMES = 62


@dataclass
class TrainResult:
    losses: list
    checkpoint_path: Path | None
    model: torch.nn.Module
    config: VocoderConfig


def config_to_dict(config: VocoderConfig) -> dict:
    return asdict(config)


def config_from_dict(d: dict) -> VocoderConfig:
    d = dict(d)
    d["mel"] = MelConfig(**d["mel"])
    return VocoderConfig(**d)


def save_checkpoint(path, *, component, config, model, optimizer, step,
                    torch_rng, numpy_rng, mode=None, teacher=None) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "component": component,
        "config": config_to_dict(config),
        "mode": mode,
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict(),
        "step": step,
        "torch_rng": torch_rng.get_state(),
        "numpy_rng": numpy_rng.bit_generator.state,
        "teacher": str(teacher) if teacher else None,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path, expect_component=None) -> dict:
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    version = ckpt.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {version}")
    if expect_component and ckpt["component"] != expect_component:
        raise DependencyError(
            f"{path}: expected a {expect_component} checkpoint, found {ckpt['component']}"
        )
    return ckpt


def vocoder_from_checkpoint(ckpt: dict) -> tuple[VocoderModel, VocoderConfig]:
    config = config_from_dict(ckpt["config"])
    model = VocoderModel(config)
    model.load_state_dict(ckpt["model"])
    return model, config


def reference_upsampler_from_checkpoint(ckpt: dict) -> ReferenceUpsampler:
    """Extract the frozen reference upsampler from a trained vocoder."""
    prefix = "upsampler."
    state = {k[len(prefix):]: v for k, v in ckpt["model"].items() if k.startswith(prefix)}
    ref = ReferenceUpsampler()
    ref.load_state_dict(state)
    ref.requires_grad_(False)
    ref.eval()
    return ref


def deep_upsampler_from_checkpoint(ckpt: dict) -> DeepUpsampler:
    u = DeepUpsampler()
    u.load_state_dict(ckpt["model"])
    return u


def _restore_rng(ckpt, torch_gen, numpy_rng):
    torch_gen.set_state(ckpt["torch_rng"])
    numpy_rng.bit_generator.state = ckpt["numpy_rng"]


def _noise_loss(kind, eps, pred):
    if kind == "l2":
        return ((eps - pred) ** 2).mean()
    return (eps - pred).abs().mean()


def train_vocoder(
    entries: list[ManifestEntry],
    mode: str,
    config: VocoderConfig,
    *,
    steps: int,
    seed: int,
    lr: float = DEFAULT_VOCODER_LR,
    batch_size: int = 4,
    crop_samples: int = DEFAULT_CROP_SAMPLES,
    checkpoint_path=None,
    resume_from=None,
    base_dir=None,
    log_every: int = 50,
) -> TrainResult:
    """Noise-prediction training of the vocoder.

    mode selects the conditioning mel: the clean one (restoration base) or
    the degraded one (supervised baseline). The waveform target is always
    the clean audio. `steps` is the target total step count, so resuming
    an earlier checkpoint runs only the remaining steps.
    """
    if mode not in (MODE_CLEAN, MODE_DEGRADED):
        raise ValueError(f"mode must be {MODE_CLEAN} or {MODE_DEGRADED}, got {mode!r}")
    hop = config.mel.hop_length
    if crop_samples % hop:
        raise ValueError(f"crop_samples {crop_samples} must be a multiple of hop {hop}")
    crop_frames = crop_samples // hop

    utts = load_training_set(
        entries, config.mel,
        need_degraded=(mode == MODE_DEGRADED),
        min_frames=crop_frames,
        base_dir=base_dir,
    )

    torch.manual_seed(seed)
    model = VocoderModel(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    noise_gen = torch.Generator().manual_seed(seed + 1)
    crop_rng = np.random.default_rng(seed + 2)
    start_step = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from, expect_component="vocoder")
        model.load_state_dict(ckpt["model"])
        optimizer.load_state_dict(ckpt["optimizer"])
        _restore_rng(ckpt, noise_gen, crop_rng)
        start_step = ckpt["step"]

    schedule = config.schedule()
    alpha_bars = torch.from_numpy(schedule.alpha_bars).to(torch.float32)
    use_degraded_mel = mode == MODE_DEGRADED

    model.train()
    losses = []
    for step in range(start_step, steps):
        x0, mels = _sample_crops(
            utts, batch_size, crop_frames, crop_samples, hop, crop_rng, use_degraded_mel
        )
        t = torch.randint(0, schedule.num_steps, (batch_size,), generator=noise_gen)
        eps = torch.randn(x0.shape, generator=noise_gen)
        ab = alpha_bars[t].unsqueeze(1)
        x_t = torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps

        conditioner = model.upsampler(mels)
        pred = model(x_t, t, conditioner)
        loss = _noise_loss(config.noise_loss, eps, pred)
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"non-finite vocoder loss {loss.item()} at step {step} "
                f"(mode={mode}, lr={lr}, batch={batch_size})"
            )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
        if log_every and (step + 1) % log_every == 0:
            log.info("vocoder step %d/%d loss %.4f", step + 1, steps, losses[-1])

    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path, component="vocoder", config=config, model=model,
            optimizer=optimizer, step=steps, torch_rng=noise_gen,
            numpy_rng=crop_rng, mode=mode,
        )
    return TrainResult(losses=losses, checkpoint_path=checkpoint_path, model=model, config=config)


def _sample_crops(utts, batch_size, crop_frames, crop_samples, hop, crop_rng, use_degraded_mel):
    n_mels = utts[0].clean_mel.shape[0]
    x0 = np.empty((batch_size, crop_samples), dtype=np.float32)
    mels = np.empty((batch_size, n_mels, crop_frames), dtype=np.float32)
    for row in range(batch_size):
        u = utts[int(crop_rng.integers(len(utts)))]
        f0 = int(crop_rng.integers(u.n_frames - crop_frames + 1))
        x0[row] = u.clean_audio[f0 * hop:f0 * hop + crop_samples]
        source = u.degraded_mel if use_degraded_mel else u.clean_mel
        mels[row] = source[:, f0:f0 + crop_frames]
    return torch.from_numpy(x0), torch.from_numpy(mels)


def train_deep_upsampler(
    entries: list[ManifestEntry],
    vocoder_checkpoint,
    *,
    steps: int,
    seed: int,
    lr: float = DEFAULT_UPSAMPLER_LR,
    batch_size: int = 8,
    crop_frames: int = DEFAULT_UPSAMPLER_CROP_FRAMES,
    checkpoint_path=None,
    resume_from=None,
    base_dir=None,
    log_every: int = 50,
) -> TrainResult:
    """Match the frozen reference upsampler's clean conditioner from the
    degraded mel under L1 loss. The reference receives no updates; its
    parameters are asserted bytewise unchanged after training.
    """
    vckpt = load_checkpoint(vocoder_checkpoint, expect_component="vocoder")
    if vckpt["mode"] != MODE_CLEAN:
        raise DependencyError(
            f"{vocoder_checkpoint}: deep-upsampler training needs a {MODE_CLEAN} "
            f"vocoder checkpoint, found mode {vckpt['mode']!r}"
        )
    config = config_from_dict(vckpt["config"])
    reference = reference_upsampler_from_checkpoint(vckpt)
    before = [p.detach().clone() for p in reference.parameters()]

    utts = load_training_set(
        entries, config.mel, need_degraded=True, min_frames=crop_frames, base_dir=base_dir
    )

    torch.manual_seed(seed)
    student = DeepUpsampler()
    optimizer = torch.optim.Adam(student.parameters(), lr=lr)
    noise_gen = torch.Generator().manual_seed(seed + 1)  # kept for format parity
    crop_rng = np.random.default_rng(seed + 2)
    start_step = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from, expect_component="deep-upsampler")
        student.load_state_dict(ckpt["model"])
        optimizer.load_state_dict(ckpt["optimizer"])
        _restore_rng(ckpt, noise_gen, crop_rng)
        start_step = ckpt["step"]

    student.train()
    losses = []
    for step in range(start_step, steps):
        clean_mels, degraded_mels = _paired_mel_crops(utts, batch_size, crop_frames, crop_rng)
        with torch.no_grad():
            target = reference(clean_mels)
        pred = student(degraded_mels)
        loss = (target - pred).abs().mean()
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite upsampler loss {loss.item()} at step {step}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
        if log_every and (step + 1) % log_every == 0:
            log.info("upsampler step %d/%d loss %.4f", step + 1, steps, losses[-1])

    for p, snapshot in zip(reference.parameters(), before):
        if not torch.equal(p, snapshot):
            raise AssertionError("reference upsampler parameters changed during training")

    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path, component="deep-upsampler", config=config, model=student,
            optimizer=optimizer, step=steps, torch_rng=noise_gen, numpy_rng=crop_rng,
            teacher=vocoder_checkpoint,
        )
    return TrainResult(losses=losses, checkpoint_path=checkpoint_path, model=student, config=config)


def _paired_mel_crops(utts, batch_size, crop_frames, crop_rng):
    n_mels = utts[0].clean_mel.shape[0]
    clean = np.empty((batch_size, n_mels, crop_frames), dtype=np.float32)
    degraded = np.empty((batch_size, n_mels, crop_frames), dtype=np.float32)
    for row in range(batch_size):
        u = utts[int(crop_rng.integers(len(utts)))]
        f0 = int(crop_rng.integers(u.n_frames - crop_frames + 1))
        clean[row] = u.clean_mel[:, f0:f0 + crop_frames]
        degraded[row] = u.degraded_mel[:, f0:f0 + crop_frames]
    return torch.from_numpy(clean), torch.from_numpy(degraded)
