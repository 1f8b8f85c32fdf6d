"""Waveform restoration: degraded mel -> conditioner -> diffusion sampler."""

from __future__ import annotations

from .audio import Waveform
from .diffusion import sample
from .errors import ConfigMismatchError
from .mel import mel_spectrogram
from .training import (
    deep_upsampler_from_checkpoint,
    load_checkpoint,
    reference_upsampler_from_checkpoint,
    vocoder_from_checkpoint,
)
from .upsampler import upsample_deep
from .vocoder import upsample_reference

_SHARED_KEYS = ("mel", "diffusion_steps", "beta_start", "beta_end",
                "residual_layers", "residual_channels", "dilation_cycle")


def _check_compatible(vocoder_cfg: dict, upsampler_cfg: dict) -> None:
    diffs = [
        f"  {key}: vocoder={vocoder_cfg.get(key)!r} upsampler={upsampler_cfg.get(key)!r}"
        for key in _SHARED_KEYS
        if vocoder_cfg.get(key) != upsampler_cfg.get(key)
    ]
    if diffs:
        raise ConfigMismatchError(
            "checkpoints were trained with incompatible configs:\n" + "\n".join(diffs)
        )


def restore(degraded: Waveform, upsampler_ckpt, vocoder_ckpt, seed: int = 0) -> Waveform:
    """Full restoration path: deep CNN conditioner spliced into the vocoder.

    Refuses to run when the two checkpoints disagree on the mel or
    diffusion configuration; the raised error lists every differing field.
    """
    vckpt = load_checkpoint(vocoder_ckpt, expect_component="vocoder")
    uckpt = load_checkpoint(upsampler_ckpt, expect_component="deep-upsampler")
    _check_compatible(vckpt["config"], uckpt["config"])

    model, config = vocoder_from_checkpoint(vckpt)
    upsampler = deep_upsampler_from_checkpoint(uckpt)

    m_t = mel_spectrogram(degraded, config.mel)
    conditioner = upsample_deep(m_t, upsampler, mode="eval")
    out = sample(model, conditioner, config.schedule(), seed=seed)
    return Waveform(out.samples[: len(degraded.samples)], out.sample_rate_hz)


def restore_baseline(degraded: Waveform, vocoder_ckpt, seed: int = 0) -> Waveform:
    """Baseline path: the vocoder's own reference upsampler on the degraded mel."""
    vckpt = load_checkpoint(vocoder_ckpt, expect_component="vocoder")
    model, config = vocoder_from_checkpoint(vckpt)
    reference = reference_upsampler_from_checkpoint(vckpt)

    m_t = mel_spectrogram(degraded, config.mel)
    conditioner = upsample_reference(m_t, reference, provenance="reference-from-degraded")
    conditioner.values = conditioner.values.detach()
    out = sample(model, conditioner, config.schedule(), seed=seed)
    return Waveform(out.samples[: len(degraded.samples)], out.sample_rate_hz)
