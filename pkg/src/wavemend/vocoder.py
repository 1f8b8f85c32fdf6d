"""Diffusion vocoder: residual dilated-conv network with a step embedding
and the original two-layer transposed-convolution conditioner upsampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .diffusion import NoiseSchedule
from .mel import MelConfig, MelSpectrogram

LEAKY_SLOPE = 0.4


@dataclass(frozen=True)
class VocoderConfig:
    residual_layers: int = 30
    residual_channels: int = 64
    dilation_cycle: int = 10
    diffusion_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.05
    noise_loss: str = "l1"
    profile: str = "full"
    mel: MelConfig = field(default_factory=MelConfig)

    def __post_init__(self):
        if min(self.residual_layers, self.residual_channels,
               self.dilation_cycle, self.diffusion_steps) <= 0:
            raise ValueError("vocoder config sizes must be positive")
        if self.noise_loss not in ("l1", "l2"):
            raise ValueError(f"noise_loss must be l1 or l2, got {self.noise_loss!r}")

    @classmethod
    def full(cls, **overrides):
        return cls(**{"profile": "full", **overrides})

    @classmethod
    def tiny(cls, **overrides):
        """Small profile for CI and desk-scale experiments."""
        defaults = dict(residual_layers=8, residual_channels=32,
                        diffusion_steps=20, profile="tiny")
        defaults.update(overrides)
        return cls(**defaults)

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.linear(self.diffusion_steps, self.beta_start, self.beta_end)

    def dilations(self):
        return [2 ** (i % self.dilation_cycle) for i in range(self.residual_layers)]


@dataclass
class Conditioner:
    """Mel conditioning upsampled to waveform resolution, [n_mels x L]."""

    values: torch.Tensor
    provenance: str  # reference-from-clean | reference-from-degraded | deep-cnn

    def __post_init__(self):
        if self.values.dim() != 2:
            raise ValueError(f"conditioner must be [n_mels x L], got {tuple(self.values.shape)}")

    @property
    def length(self) -> int:
        return self.values.shape[-1]


class ReferenceUpsampler(nn.Module):
    """Two transposed 2-D convolutions, x16 in time each (256 total == hop)."""

    def __init__(self):
        super().__init__()
        self.conv1 = nn.ConvTranspose2d(1, 1, (3, 32), stride=(1, 16), padding=(1, 8))
        self.conv2 = nn.ConvTranspose2d(1, 1, (3, 32), stride=(1, 16), padding=(1, 8))

    def forward(self, mel):
        x = mel.unsqueeze(1)
        x = F.leaky_relu(self.conv1(x), LEAKY_SLOPE)
        x = F.leaky_relu(self.conv2(x), LEAKY_SLOPE)
        return x.squeeze(1)


class DiffusionStepEmbedding(nn.Module):
    """Sinusoidal step table projected through two fully connected layers."""

    def __init__(self, max_steps: int):
        super().__init__()
        self.register_buffer("table", self._build_table(max_steps), persistent=False)
        self.projection1 = nn.Linear(128, 512)
        self.projection2 = nn.Linear(512, 512)

    @staticmethod
    def _build_table(max_steps):
        steps = torch.arange(max_steps).unsqueeze(1)
        dims = torch.arange(64).unsqueeze(0)
        angles = steps * 10.0 ** (dims * 4.0 / 63.0)
        return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)

    def forward(self, t):
        x = self.table[t]
        x = F.silu(self.projection1(x))
        return F.silu(self.projection2(x))


class ResidualBlock(nn.Module):
    def __init__(self, n_mels: int, channels: int, dilation: int):
        super().__init__()
        self.dilated_conv = nn.Conv1d(channels, 2 * channels, 3,
                                      padding=dilation, dilation=dilation)
        self.diffusion_projection = nn.Linear(512, channels)
        self.conditioner_projection = nn.Conv1d(n_mels, 2 * channels, 1)
        self.output_projection = nn.Conv1d(channels, 2 * channels, 1)

    def forward(self, x, step_emb, conditioner):
        y = x + self.diffusion_projection(step_emb).unsqueeze(-1)
        y = self.dilated_conv(y) + self.conditioner_projection(conditioner)
        gate, filt = torch.chunk(y, 2, dim=1)
        y = torch.sigmoid(gate) * torch.tanh(filt)
        y = self.output_projection(y)
        residual, skip = torch.chunk(y, 2, dim=1)
        return (x + residual) / math.sqrt(2.0), skip


class VocoderModel(nn.Module):
    """Predicts the noise component of x_t given the step and conditioner."""

    def __init__(self, config: VocoderConfig):
        super().__init__()
        self.config = config
        c = config.residual_channels
        self.input_projection = nn.Conv1d(1, c, 1)
        self.diffusion_embedding = DiffusionStepEmbedding(config.diffusion_steps)
        self.upsampler = ReferenceUpsampler()
        self.residual_layers = nn.ModuleList(
            ResidualBlock(config.mel.n_mels, c, d) for d in config.dilations()
        )
        self.skip_projection = nn.Conv1d(c, c, 1)
        self.output_projection = nn.Conv1d(c, 1, 1)
        # Zero output at init makes the first training losses sit at E|N(0,1)|.
        nn.init.zeros_(self.output_projection.weight)
        nn.init.zeros_(self.output_projection.bias)

    def forward(self, audio, t, conditioner):
        if audio.shape[-1] != conditioner.shape[-1]:
            raise ValueError(
                f"audio length {audio.shape[-1]} != conditioner length {conditioner.shape[-1]}"
            )
        x = F.relu(self.input_projection(audio.unsqueeze(1)))
        emb = self.diffusion_embedding(t)
        skip_sum = None
        for layer in self.residual_layers:
            x, skip = layer(x, emb, conditioner)
            skip_sum = skip if skip_sum is None else skip_sum + skip
        x = skip_sum / math.sqrt(len(self.residual_layers))
        x = F.relu(self.skip_projection(x))
        return self.output_projection(x).squeeze(1)


def upsample_reference(m: MelSpectrogram, u: ReferenceUpsampler,
                       provenance: str = "reference-from-clean") -> Conditioner:
    """Run one mel through the reference upsampler -> [n_mels x 256*frames]."""
    x = torch.from_numpy(np.asarray(m.values)).to(torch.float32).unsqueeze(0)
    return Conditioner(values=u(x).squeeze(0), provenance=provenance)


def predict_noise(model: VocoderModel, x_t, t: int, c: Conditioner):
    """Single-utterance wrapper around the batched model forward."""
    x = torch.as_tensor(np.asarray(x_t), dtype=torch.float32).unsqueeze(0)
    values = c.values.unsqueeze(0).to(torch.float32)
    return model(x, torch.tensor([t]), values).squeeze(0)
