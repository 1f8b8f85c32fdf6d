"""Denoising-diffusion forward process, schedule, and ancestral sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .audio import Waveform


@dataclass(frozen=True)
class NoiseSchedule:
    """Diffusion beta sequence with its derived alpha / alpha-bar arrays."""

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) == 0:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("betas must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))
        if np.any(np.diff(self.alpha_bars) >= 0):
            raise ValueError("alpha_bars must be strictly decreasing")

    @classmethod
    def linear(cls, num_steps: int = 50, beta_start: float = 1e-4, beta_end: float = 0.05):
        return cls(betas=np.linspace(beta_start, beta_end, num_steps))

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    @property
    def terminal_noise_fraction(self) -> float:
        """sqrt(1 - alpha_bar) at the last step; ~0.85 for the default schedule."""
        return float(np.sqrt(1.0 - self.alpha_bars[-1]))


def forward_diffuse(x0, t: int, eps, schedule: NoiseSchedule):
    """One-shot forward noising: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps.

    Works elementwise on numpy arrays and torch tensors alike.
    """
    if not 0 <= t < schedule.num_steps:
        raise ValueError(f"step {t} outside [0, {schedule.num_steps})")
    if len(eps) != len(x0):
        raise ValueError(f"noise length {len(eps)} != signal length {len(x0)}")
    ab = float(schedule.alpha_bars[t])
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def sample(model, conditioner, schedule: NoiseSchedule, seed: int = 0, x_init=None) -> Waveform:
    """Ancestral reverse process conditioned on an upsampled mel conditioner.

    Starts from N(0, 1) noise (or x_init when given, e.g. for consistency
    checks), runs all steps of the schedule, and returns the waveform
    clamped to [-1, 1]. Fixed seed means identical output.
    """
    values = getattr(conditioner, "values", conditioner)
    c = torch.as_tensor(np.asarray(values.detach() if torch.is_tensor(values) else values),
                        dtype=torch.float32).unsqueeze(0)
    length = c.shape[-1]

    gen = torch.Generator().manual_seed(seed)
    if x_init is None:
        x = torch.randn(1, length, generator=gen)
    else:
        x = torch.as_tensor(np.asarray(x_init), dtype=torch.float32).reshape(1, length)

    model.eval()
    alphas = schedule.alphas
    alpha_bars = schedule.alpha_bars
    betas = schedule.betas
    with torch.no_grad():
        for t in range(schedule.num_steps - 1, -1, -1):
            eps_hat = model(x, torch.tensor([t]), c)
            x = (x - (1.0 - alphas[t]) / math.sqrt(1.0 - alpha_bars[t]) * eps_hat) / math.sqrt(alphas[t])
            if t > 0:
                sigma = math.sqrt((1.0 - alpha_bars[t - 1]) / (1.0 - alpha_bars[t]) * betas[t])
                x = x + sigma * torch.randn(1, length, generator=gen)

    out = x.squeeze(0).clamp(-1.0, 1.0).numpy().astype(np.float64)
    return Waveform(out, model.config.mel.sample_rate_hz)
