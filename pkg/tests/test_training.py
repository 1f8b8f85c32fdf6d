"""Training loops: initial loss level, resume reproducibility, stage order,
checkpoint plumbing, and restoration."""

import numpy as np
import pytest
import torch

from wavemend.audio import load_wav
from wavemend.data import ManifestEntry
from wavemend.errors import ConfigMismatchError, DependencyError
from wavemend.restore import restore, restore_baseline
from wavemend.training import (
    MODE_CLEAN,
    MODE_DEGRADED,
    config_from_dict,
    config_to_dict,
    deep_upsampler_from_checkpoint,
    load_checkpoint,
    reference_upsampler_from_checkpoint,
    train_deep_upsampler,
    train_vocoder,
)
from wavemend.vocoder import VocoderConfig

TINY = VocoderConfig.tiny()
FAST = dict(batch_size=2, crop_samples=4096, log_every=0)


def test_config_dict_round_trip():
    cfg = VocoderConfig.tiny()
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_initial_loss_near_folded_normal_mean(paired_corpus):
    root, _, entries = paired_corpus
    res = train_vocoder(entries, MODE_CLEAN, TINY, steps=5, seed=3, base_dir=root, **FAST)
    assert abs(res.losses[0] - 0.798) < 0.1


def test_vocoder_resume_reproduces_run(paired_corpus, tmp_path):
    root, _, entries = paired_corpus
    ck = tmp_path / "v.pt"
    full = train_vocoder(entries, MODE_CLEAN, TINY, steps=6, seed=11, base_dir=root, **FAST)
    train_vocoder(entries, MODE_CLEAN, TINY, steps=3, seed=11, base_dir=root,
                  checkpoint_path=ck, **FAST)
    resumed = train_vocoder(entries, MODE_CLEAN, TINY, steps=6, seed=11, base_dir=root,
                            resume_from=ck, **FAST)
    assert resumed.losses == full.losses[3:]


def test_degraded_mode_needs_degraded_paths(paired_corpus):
    root, _, entries = paired_corpus
    stripped = [ManifestEntry(e.id, e.clean_path) for e in entries]
    with pytest.raises(ValueError):
        train_vocoder(stripped, MODE_DEGRADED, TINY, steps=1, seed=0, base_dir=root, **FAST)
    res = train_vocoder(entries, MODE_DEGRADED, TINY, steps=2, seed=0, base_dir=root, **FAST)
    assert len(res.losses) == 2


def test_empty_manifest_rejected():
    with pytest.raises(ValueError):
        train_vocoder([], MODE_CLEAN, TINY, steps=1, seed=0)


def test_bad_mode_rejected(paired_corpus):
    root, _, entries = paired_corpus
    with pytest.raises(ValueError):
        train_vocoder(entries, "both", TINY, steps=1, seed=0, base_dir=root)


@pytest.fixture(scope="module")
def clean_vocoder_ckpt(paired_corpus, tmp_path_factory):
    root, _, entries = paired_corpus
    path = tmp_path_factory.mktemp("ckpt") / "vocoder-clean.pt"
    train_vocoder(entries, MODE_CLEAN, TINY, steps=4, seed=5, base_dir=root,
                  checkpoint_path=path, **FAST)
    return path


class TestDeepUpsamplerTraining:
    def test_runs_and_freezes_reference(self, paired_corpus, clean_vocoder_ckpt, tmp_path):
        root, _, entries = paired_corpus
        before = [p.clone() for p in
                  reference_upsampler_from_checkpoint(load_checkpoint(clean_vocoder_ckpt)).parameters()]
        ck = tmp_path / "u.pt"
        res = train_deep_upsampler(entries, clean_vocoder_ckpt, steps=4, seed=6,
                                   batch_size=2, crop_frames=16, base_dir=root,
                                   checkpoint_path=ck, log_every=0)
        assert len(res.losses) == 4
        after = reference_upsampler_from_checkpoint(load_checkpoint(clean_vocoder_ckpt))
        for p, snap in zip(after.parameters(), before):
            assert torch.equal(p, snap)
        ckpt = load_checkpoint(ck, expect_component="deep-upsampler")
        assert ckpt["step"] == 4
        deep_upsampler_from_checkpoint(ckpt)

    def test_resume_reproduces_run(self, paired_corpus, clean_vocoder_ckpt, tmp_path):
        root, _, entries = paired_corpus
        kw = dict(batch_size=2, crop_frames=16, base_dir=root, log_every=0)
        full = train_deep_upsampler(entries, clean_vocoder_ckpt, steps=6, seed=7, **kw)
        ck = tmp_path / "u3.pt"
        train_deep_upsampler(entries, clean_vocoder_ckpt, steps=3, seed=7,
                             checkpoint_path=ck, **kw)
        resumed = train_deep_upsampler(entries, clean_vocoder_ckpt, steps=6, seed=7,
                                       resume_from=ck, **kw)
        assert resumed.losses == full.losses[3:]

    def test_requires_clean_mode_vocoder(self, paired_corpus, tmp_path):
        root, _, entries = paired_corpus
        degraded_ckpt = tmp_path / "vocoder-degraded.pt"
        train_vocoder(entries, MODE_DEGRADED, TINY, steps=2, seed=8, base_dir=root,
                      checkpoint_path=degraded_ckpt, **FAST)
        with pytest.raises(DependencyError):
            train_deep_upsampler(entries, degraded_ckpt, steps=1, seed=0, base_dir=root)

    def test_component_tag_checked(self, paired_corpus, clean_vocoder_ckpt, tmp_path):
        root, _, entries = paired_corpus
        ck = tmp_path / "u2.pt"
        train_deep_upsampler(entries, clean_vocoder_ckpt, steps=1, seed=9,
                             batch_size=2, crop_frames=16, base_dir=root,
                             checkpoint_path=ck, log_every=0)
        with pytest.raises(DependencyError):
            load_checkpoint(ck, expect_component="vocoder")


@pytest.fixture(scope="module")
def upsampler_ckpt(paired_corpus, clean_vocoder_ckpt, tmp_path_factory):
    root, _, entries = paired_corpus
    path = tmp_path_factory.mktemp("ckpt") / "upsampler.pt"
    train_deep_upsampler(entries, clean_vocoder_ckpt, steps=3, seed=10,
                         batch_size=2, crop_frames=16, base_dir=root,
                         checkpoint_path=path, log_every=0)
    return path


class TestRestore:
    def test_length_and_determinism(self, paired_corpus, clean_vocoder_ckpt, upsampler_ckpt):
        root, _, entries = paired_corpus
        degraded = load_wav(root / entries[0].degraded_path)
        out1 = restore(degraded, upsampler_ckpt, clean_vocoder_ckpt, seed=4)
        out2 = restore(degraded, upsampler_ckpt, clean_vocoder_ckpt, seed=4)
        other = restore(degraded, upsampler_ckpt, clean_vocoder_ckpt, seed=5)
        assert len(out1) == len(degraded)
        assert out1.sample_rate_hz == 16000
        np.testing.assert_array_equal(out1.samples, out2.samples)
        assert not np.array_equal(out1.samples, other.samples)

    def test_baseline_restore(self, paired_corpus, tmp_path):
        root, _, entries = paired_corpus
        ck = tmp_path / "vd.pt"
        train_vocoder(entries, MODE_DEGRADED, TINY, steps=2, seed=12, base_dir=root,
                      checkpoint_path=ck, **FAST)
        degraded = load_wav(root / entries[1].degraded_path)
        out = restore_baseline(degraded, ck, seed=1)
        assert len(out) == len(degraded)

    def test_config_mismatch_refused(self, paired_corpus, upsampler_ckpt, tmp_path):
        root, _, entries = paired_corpus
        other_cfg = VocoderConfig.tiny(diffusion_steps=10)
        ck = tmp_path / "v10.pt"
        train_vocoder(entries, MODE_CLEAN, other_cfg, steps=2, seed=13, base_dir=root,
                      checkpoint_path=ck, **FAST)
        degraded = load_wav(root / entries[0].degraded_path)
        with pytest.raises(ConfigMismatchError) as err:
            restore(degraded, upsampler_ckpt, ck, seed=0)
        assert "diffusion_steps" in str(err.value)
