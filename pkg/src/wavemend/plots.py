"""Figure rendering: spectrogram comparisons and metric summaries."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .audio import Waveform
from .mel import MelConfig, stft_magnitude
from .metrics import MetricReport

SPEC_FLOOR_DB = -100.0


def spectrogram_db(w: Waveform) -> np.ndarray:
    cfg = MelConfig(sample_rate_hz=w.sample_rate_hz)
    return 20.0 * np.log10(stft_magnitude(w, cfg) + 1e-8)


def plot_spectrogram_comparison(waveforms, labels, out_path) -> Path:
    """Stacked log-magnitude spectrograms on one shared color scale,
    frequency axis limited to 0-8 kHz."""
    if len(waveforms) != len(labels):
        raise ValueError("need one label per waveform")
    specs = [spectrogram_db(w) for w in waveforms]
    vmax = max(float(s.max()) for s in specs)
    vmin = max(SPEC_FLOOR_DB, min(float(s.min()) for s in specs))

    fig, axes = plt.subplots(len(specs), 1, figsize=(8, 2.2 * len(specs)), sharex=True)
    axes = np.atleast_1d(axes)
    for ax, spec, w, label in zip(axes, specs, waveforms, labels):
        nyquist = w.sample_rate_hz / 2
        extent = [0, len(w) / w.sample_rate_hz, 0, nyquist / 1000.0]
        im = ax.imshow(spec, origin="lower", aspect="auto", extent=extent,
                       vmin=vmin, vmax=vmax, cmap="magma")
        ax.set_ylim(0, min(8.0, nyquist / 1000.0))
        ax.set_ylabel("kHz")
        ax.set_title(label, fontsize=10)
    axes[-1].set_xlabel("time (s)")
    fig.colorbar(im, ax=axes, label="dB", fraction=0.025)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_metric_summary(report: MetricReport, out_path) -> Path:
    """One panel per metric: system means with sample-std error bars."""
    metrics = sorted({m for (_, m, *_rest) in report.aggregates})
    systems = list(dict.fromkeys(s for (s, *_rest) in report.aggregates))
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3.2))
    axes = np.atleast_1d(axes)
    for ax, metric in zip(axes, metrics):
        means = [report.aggregate(s, metric)[0] for s in systems]
        stds = [report.aggregate(s, metric)[1] for s in systems]
        x = np.arange(len(systems))
        ax.bar(x, means, yerr=stds, capsize=4, color="#4878a8")
        ax.set_xticks(x)
        ax.set_xticklabels(systems, rotation=20, ha="right")
        ax.set_title(metric)
    fig.tight_layout()

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
