"""Speech restoration toolkit: deterministic lossy degradations, a
diffusion vocoder, a deep CNN conditioner upsampler trained to invert the
degradation, and an objective evaluation harness."""

__version__ = "0.1.0"

from .audio import Waveform, load_wav, resample, save_wav
from .degrade import DegradationSpec, apply_degradation, clip_signal, degrade_external, degrade_lpc10
from .diffusion import NoiseSchedule, forward_diffuse, sample
from .mel import MelConfig, MelSpectrogram, mel_spectrogram
from .metrics import evaluate_systems, lsd, mcd, paired_t_test, si_sdr
from .restore import restore, restore_baseline
from .upsampler import DeepUpsampler, conditioner_match_loss, upsample_deep
from .vocoder import Conditioner, ReferenceUpsampler, VocoderConfig, VocoderModel, upsample_reference

__all__ = [
    "Waveform", "load_wav", "save_wav", "resample",
    "MelConfig", "MelSpectrogram", "mel_spectrogram",
    "DegradationSpec", "apply_degradation", "clip_signal", "degrade_lpc10", "degrade_external",
    "NoiseSchedule", "forward_diffuse", "sample",
    "VocoderConfig", "VocoderModel", "ReferenceUpsampler", "Conditioner", "upsample_reference",
    "DeepUpsampler", "upsample_deep", "conditioner_match_loss",
    "restore", "restore_baseline",
    "lsd", "si_sdr", "mcd", "paired_t_test", "evaluate_systems",
]
