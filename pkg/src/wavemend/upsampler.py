"""Deep CNN conditioner upsampler: 15 layers, x256 in time.

Eight stride-1 conv layers grow the channel count, then transposed
convolutions (x4 in time each) alternate with convs back down to one
channel. The output shape matches the reference upsampler exactly, which
is what makes splicing it into the frozen vocoder possible.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .mel import MelSpectrogram
from .vocoder import LEAKY_SLOPE, Conditioner

HEAD_CHANNELS = (1, 4, 8, 16, 64, 64, 64, 64)
TAIL_PLAN = (
    ("transpose", 64, 64),
    ("conv", 64, 16),
    ("transpose", 16, 16),
    ("conv", 16, 8),
    ("transpose", 8, 8),
    ("conv", 8, 4),
    ("transpose", 4, 1),
)
TIME_UPSAMPLING = 256


def _conv(in_ch, out_ch):
    return nn.Conv2d(in_ch, out_ch, (5, 5), stride=(1, 1), padding=(2, 2))


def _transpose(in_ch, out_ch):
    return nn.ConvTranspose2d(in_ch, out_ch, (3, 8), stride=(1, 4), padding=(1, 2))


class DeepUpsampler(nn.Module):
    def __init__(self):
        super().__init__()
        layers = []
        in_ch = 1
        for out_ch in HEAD_CHANNELS:
            layers.append(self._block(_conv(in_ch, out_ch), out_ch))
            in_ch = out_ch
        for kind, t_in, t_out in TAIL_PLAN[:-1]:
            op = _transpose(t_in, t_out) if kind == "transpose" else _conv(t_in, t_out)
            layers.append(self._block(op, t_out))
        # Final layer: no batch norm or activation, so the conditioner can
        # span the reference upsampler's unbounded range.
        layers.append(nn.Sequential(_transpose(*TAIL_PLAN[-1][1:])))
        self.layers = nn.ModuleList(layers)

    @staticmethod
    def _block(op, channels):
        return nn.Sequential(op, nn.BatchNorm2d(channels), nn.LeakyReLU(LEAKY_SLOPE))

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def forward(self, mel):
        x = mel.unsqueeze(1)
        for layer in self.layers:
            x = layer(x)
        return x.squeeze(1)


def upsample_deep(m: MelSpectrogram, u: DeepUpsampler, mode: str = "eval") -> Conditioner:
    """Run one mel through the deep upsampler -> [n_mels x 256*frames].

    Eval mode uses the frozen batch-norm running statistics and is
    deterministic; train mode normalizes with batch statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    x = torch.from_numpy(np.asarray(m.values)).to(torch.float32).unsqueeze(0)
    if mode == "eval":
        u.eval()
        with torch.no_grad():
            out = u(x)
    else:
        u.train()
        out = u(x)
    return Conditioner(values=out.squeeze(0), provenance="deep-cnn")


def conditioner_match_loss(c, c_t):
    """Mean absolute difference over all elements of two conditioners."""
    a = c.values if isinstance(c, Conditioner) else c
    b = c_t.values if isinstance(c_t, Conditioner) else c_t
    if a.shape != b.shape:
        raise ValueError(f"conditioner shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()
