"""Vocoder network shapes, reference upsampler, gradient correctness."""

import numpy as np
import pytest
import torch

from wavemend.mel import MelConfig, MelSpectrogram
from wavemend.vocoder import (
    Conditioner,
    ReferenceUpsampler,
    VocoderConfig,
    VocoderModel,
    predict_noise,
    upsample_reference,
)


def _mel(frames, seed=0, n_mels=80):
    rng = np.random.default_rng(seed)
    return MelSpectrogram(rng.uniform(-11.5, 0.0, (n_mels, frames)), n_mels, 256, 16000)


def _tiny(seed=0):
    torch.manual_seed(seed)
    return VocoderModel(VocoderConfig.tiny())


class TestReferenceUpsampler:
    def test_shape(self):
        torch.manual_seed(1)
        c = upsample_reference(_mel(10), ReferenceUpsampler())
        assert tuple(c.values.shape) == (80, 2560)
        assert c.provenance == "reference-from-clean"

    def test_floor_mel_finite(self):
        torch.manual_seed(2)
        m = MelSpectrogram(np.full((80, 6), np.log(1e-5)), 80, 256, 16000)
        c = upsample_reference(m, ReferenceUpsampler())
        assert torch.isfinite(c.values).all()

    def test_time_shift_equivariance(self):
        # The (3,32)/(1,16) kernels reach ~136 samples past a frame edge;
        # one hop of margin on each side clears the receptive field.
        torch.manual_seed(3)
        u = ReferenceUpsampler()
        base = _mel(12, seed=5)
        with torch.no_grad():
            a = upsample_reference(MelSpectrogram(base.values[:, 0:10], 80, 256, 16000), u).values
            b = upsample_reference(MelSpectrogram(base.values[:, 1:11], 80, 256, 16000), u).values
        margin = 256
        torch.testing.assert_close(
            b[:, margin:2560 - 256 - margin],
            a[:, 256 + margin:2560 - margin],
            atol=1e-5, rtol=1e-5,
        )


class TestVocoderModel:
    @pytest.mark.parametrize("length", [256, 2560, 16000])
    def test_output_shape(self, length):
        model = _tiny()
        x = torch.randn(2, length)
        c = torch.randn(2, 80, length)
        out = model(x, torch.tensor([3, 7]), c)
        assert tuple(out.shape) == (2, length)

    def test_eval_determinism(self):
        model = _tiny()
        model.eval()
        x = torch.randn(1, 512, generator=torch.Generator().manual_seed(9))
        c = torch.randn(1, 80, 512, generator=torch.Generator().manual_seed(10))
        a = model(x, torch.tensor([5]), c)
        b = model(x, torch.tensor([5]), c)
        torch.testing.assert_close(a, b, atol=0, rtol=0)

    def test_zero_init_output(self):
        model = _tiny()
        out = model(torch.randn(1, 256), torch.tensor([0]), torch.randn(1, 80, 256))
        torch.testing.assert_close(out, torch.zeros_like(out))

    def test_length_mismatch_rejected(self):
        model = _tiny()
        with pytest.raises(ValueError):
            model(torch.randn(1, 256), torch.tensor([0]), torch.randn(1, 80, 512))

    def test_predict_noise_wrapper(self):
        model = _tiny()
        model.eval()
        c = Conditioner(torch.randn(80, 256, generator=torch.Generator().manual_seed(2)), "deep-cnn")
        out = predict_noise(model, np.zeros(256), 1, c)
        assert tuple(out.shape) == (256,)
        with pytest.raises(ValueError):
            predict_noise(model, np.zeros(100), 1, c)

    def test_parameter_count_pure_function_of_config(self):
        a = VocoderModel(VocoderConfig.tiny())
        b = VocoderModel(VocoderConfig.tiny())
        assert sum(p.numel() for p in a.parameters()) == sum(p.numel() for p in b.parameters())


def central_difference_check(loss_fn, params, picks, h=1e-4):
    """Compare autodiff gradients against central differences at `picks`."""
    loss = loss_fn()
    for p in params:
        if p.grad is not None:
            p.grad = None
    loss.backward()
    worst = 0.0
    for p, idx in picks:
        analytic = p.grad.reshape(-1)[idx].item()
        with torch.no_grad():
            flat = p.data.reshape(-1)
            flat[idx] += h
            plus = loss_fn().item()
            flat[idx] -= 2 * h
            minus = loss_fn().item()
            flat[idx] += h
        numeric = (plus - minus) / (2 * h)
        denom = max(abs(analytic), abs(numeric))
        assert denom > 1e-8, "picked a parameter with vanishing gradient"
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def pick_significant(params, rng, n=10, threshold=1e-6):
    picks = []
    candidates = [p for p in params if p.grad is not None]
    while len(picks) < n:
        p = candidates[int(rng.integers(len(candidates)))]
        idx = int(rng.integers(p.numel()))
        if abs(p.grad.reshape(-1)[idx].item()) > threshold:
            picks.append((p, idx))
    return picks


def test_training_loss_gradients_match_finite_differences():
    torch.manual_seed(42)
    model = VocoderModel(VocoderConfig.tiny()).double()
    torch.nn.init.normal_(model.output_projection.weight, std=0.1)
    torch.nn.init.normal_(model.output_projection.bias, std=0.1)

    gen = torch.Generator().manual_seed(43)
    x0 = torch.rand(1, 64, generator=gen, dtype=torch.float64) - 0.5
    eps = torch.randn(1, 64, generator=gen, dtype=torch.float64)
    c = torch.randn(1, 80, 64, generator=gen, dtype=torch.float64)
    schedule = VocoderConfig.tiny().schedule()
    ab = schedule.alpha_bars[10]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps
    t = torch.tensor([10])

    def loss_fn():
        return (eps - model(x_t, t, c)).abs().mean()

    loss = loss_fn()
    for p in model.parameters():
        p.grad = None
    loss.backward()
    rng = np.random.default_rng(44)
    picks = pick_significant(list(model.parameters()), rng)
    worst = central_difference_check(loss_fn, list(model.parameters()), picks)
    assert worst < 1e-3
