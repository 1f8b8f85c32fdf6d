"""Objective evaluation: native proxy metrics, paired t-test, external
metric adapters, and the multi-system report.
"""

from __future__ import annotations

import csv
import math
import os
import re
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fftpack import dct
from scipy.special import betainc

from .audio import Waveform, load_wav
from .errors import CapabilityError, DependencyError, ExternalToolError
from .mel import MelConfig, mel_spectrogram, stft_magnitude

LOG_EPS = 1e-8
SI_SDR_CAP_DB = 100.0
MCD_COEFFS = 13

NATIVE_METRICS = ("lsd", "si_sdr", "mcd")


def _require_comparable(reference: Waveform, estimate: Waveform):
    if len(reference) != len(estimate):
        raise ValueError(f"length mismatch: {len(reference)} vs {len(estimate)}")
    if reference.sample_rate_hz != estimate.sample_rate_hz:
        raise ValueError(
            f"rate mismatch: {reference.sample_rate_hz} vs {estimate.sample_rate_hz}"
        )
    reference.require_nonempty()


def lsd(reference: Waveform, estimate: Waveform) -> float:
    """Log-spectral distance in dB: per-frame RMS over frequency of the
    20*log10 magnitude difference, averaged over frames."""
    _require_comparable(reference, estimate)
    cfg = MelConfig(sample_rate_hz=reference.sample_rate_hz)
    ref_db = 20.0 * np.log10(stft_magnitude(reference, cfg) + LOG_EPS)
    est_db = 20.0 * np.log10(stft_magnitude(estimate, cfg) + LOG_EPS)
    return float(np.mean(np.sqrt(np.mean((ref_db - est_db) ** 2, axis=0))))


def si_sdr(reference: Waveform, estimate: Waveform) -> float:
    """Scale-invariant SDR in dB, capped to +-100 to keep reports finite."""
    _require_comparable(reference, estimate)
    r = reference.samples
    e = estimate.samples
    r_energy = np.dot(r, r)
    if r_energy == 0:
        raise ValueError("SI-SDR is undefined for an all-zero reference")
    target = (np.dot(e, r) / r_energy) * r
    residual = e - target
    num = np.dot(target, target)
    den = np.dot(residual, residual)
    if den <= num * 10.0 ** (-SI_SDR_CAP_DB / 10.0):
        return SI_SDR_CAP_DB
    if num <= den * 10.0 ** (-SI_SDR_CAP_DB / 10.0):
        return -SI_SDR_CAP_DB
    return float(np.clip(10.0 * np.log10(num / den), -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


def _mel_cepstra(w: Waveform) -> np.ndarray:
    cfg = MelConfig(sample_rate_hz=w.sample_rate_hz)
    logmel = mel_spectrogram(w, cfg).values
    return dct(logmel, type=2, norm="ortho", axis=0)[1:MCD_COEFFS + 1]


def mcd(reference: Waveform, estimate: Waveform) -> float:
    """Mel-cepstral distortion in dB over 13 cepstra (c0 excluded),
    frame-averaged without alignment."""
    _require_comparable(reference, estimate)
    diff = _mel_cepstra(reference) - _mel_cepstra(estimate)
    per_frame = (10.0 / math.log(10.0)) * np.sqrt(2.0 * np.sum(diff**2, axis=0))
    return float(np.mean(per_frame))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    degenerate: bool = False


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test; p from the Student-t CDF via the
    regularized incomplete beta function. Zero-variance differences are
    flagged degenerate rather than producing a p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired t-test needs two equal-length 1-D samples")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    sd = np.std(d, ddof=1)
    if sd == 0:
        return TTestResult(t=math.nan, p=math.nan, degenerate=True)
    t = float(np.mean(d) / (sd / math.sqrt(n)))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=t, p=p)


DEFAULT_FLOAT_PATTERN = r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?"


def external_metric(reference_path, estimate_path, command_template: str,
                    pattern: str = DEFAULT_FLOAT_PATTERN) -> float:
    """Run an external scoring tool and parse one float from its stdout."""
    if "{ref}" not in command_template or "{est}" not in command_template:
        raise ValueError("command template must contain {ref} and {est} placeholders")
    command = os.path.expandvars(command_template).format(
        ref=str(reference_path), est=str(estimate_path)
    )
    argv = shlex.split(command)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise CapabilityError(f"external metric tool {argv[0]!r} not found") from exc
    if proc.returncode != 0:
        raise ExternalToolError(
            f"metric command failed with exit code {proc.returncode}: {command}",
            returncode=proc.returncode, stdout=proc.stdout, stderr=proc.stderr,
        )
    match = re.search(pattern, proc.stdout)
    if not match:
        raise ValueError(
            f"could not parse a metric value from stdout of {command!r}: {proc.stdout!r}"
        )
    return float(match.group(0))


@dataclass
class MetricReport:
    """Per-utterance scores, aggregates, and pairwise comparisons."""

    rows: list = field(default_factory=list)          # (utt_id, system, metric, value)
    aggregates: list = field(default_factory=list)    # (system, metric, mean, std, n)
    comparisons: list = field(default_factory=list)   # (metric, sys_a, sys_b, TTestResult)

    def values(self, system: str, metric: str) -> np.ndarray:
        return np.array([v for (_, s, m, v) in self.rows if s == system and m == metric])

    def aggregate(self, system: str, metric: str):
        for s, m, mean, std, n in self.aggregates:
            if s == system and m == metric:
                return mean, std, n
        raise KeyError(f"no aggregate for {system}/{metric}")

    def write_csv(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        per_utt = out / "per_utterance.csv"
        with open(per_utt, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["utterance", "system", "metric", "value"])
            writer.writerows(self.rows)
        agg = out / "aggregate.csv"
        with open(agg, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["system", "metric", "mean", "std", "n"])
            writer.writerows(self.aggregates)
        return per_utt, agg

    def format_table(self) -> str:
        lines = [f"{'system':<12} {'metric':<8} {'mean':>12} {'std':>12} {'n':>5}"]
        for s, m, mean, std, n in self.aggregates:
            lines.append(f"{s:<12} {m:<8} {mean:>12.4f} {std:>12.4f} {n:>5d}")
        if self.comparisons:
            lines.append("")
            lines.append(f"{'metric':<8} {'comparison':<24} {'t':>10} {'p':>12}")
            for m, sa, sb, res in self.comparisons:
                label = f"{sa} vs {sb}"
                if res.degenerate:
                    lines.append(f"{m:<8} {label:<24} {'-':>10} {'degenerate':>12}")
                else:
                    lines.append(f"{m:<8} {label:<24} {res.t:>10.4f} {res.p:>12.3g}")
        return "\n".join(lines)


METRIC_FUNCTIONS = {"lsd": lsd, "si_sdr": si_sdr, "mcd": mcd}


def evaluate_systems(
    entries,
    systems: dict,
    metrics=NATIVE_METRICS,
    *,
    sample_n: int | None = None,
    seed: int = 0,
    base_dir=None,
    external_commands: dict | None = None,
    workers: int = 1,
) -> MetricReport:
    """Score each system's outputs against the clean references.

    systems maps a system name to a directory holding <utterance id>.wav
    files. A seeded random subset of sample_n utterances is scored; the
    same manifest and seed always select the same subset. Native metrics
    run in-process; names in external_commands run through the adapter.
    """
    external_commands = external_commands or {}
    for name in metrics:
        if name not in METRIC_FUNCTIONS and name not in external_commands:
            raise ValueError(f"unknown metric {name!r} (no native function or external command)")

    ordered = sorted(entries, key=lambda e: e.id)
    if sample_n is not None and sample_n < len(ordered):
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(ordered), size=sample_n, replace=False)
        ordered = [ordered[i] for i in sorted(picks)]

    base = Path(base_dir) if base_dir else Path(".")
    jobs = []
    for e in ordered:
        clean_path = base / e.clean_path
        for system, out_dir in systems.items():
            est_path = Path(out_dir) / f"{e.id}.wav"
            if not est_path.exists():
                raise DependencyError(f"system {system!r} has no output for {e.id!r}: {est_path}")
            jobs.append((e.id, system, clean_path, est_path))

    def score(job):
        utt_id, system, clean_path, est_path = job
        ref = load_wav(clean_path)
        est = load_wav(est_path)
        out = []
        for name in metrics:
            if name in METRIC_FUNCTIONS:
                value = METRIC_FUNCTIONS[name](ref, est)
            else:
                value = external_metric(clean_path, est_path, external_commands[name])
            out.append((utt_id, system, name, value))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(score, jobs))
    else:
        scored = [score(j) for j in jobs]

    report = MetricReport()
    for chunk in scored:
        report.rows.extend(chunk)

    for system in systems:
        for name in metrics:
            vals = report.values(system, name)
            report.aggregates.append(
                (system, name, float(np.mean(vals)), float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0, len(vals))
            )

    names = list(systems)
    for i, sys_a in enumerate(names):
        for sys_b in names[i + 1:]:
            for name in metrics:
                res = paired_t_test(report.values(sys_a, name), report.values(sys_b, name))
                report.comparisons.append((name, sys_a, sys_b, res))
    return report
