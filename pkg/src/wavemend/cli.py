"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 stage-dependency error,
4 missing external capability, 1 anything else.
"""

from __future__ import annotations

import csv
import functools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import click

from .audio import load_wav, save_wav
from .config import ExperimentConfig, RunDirectory, apply_overrides, load_config
from .data import ManifestEntry, read_manifest, write_manifest
from .degrade import DegradationSpec, apply_degradation
from .errors import (
    CapabilityError,
    ConfigError,
    DependencyError,
    WavemendError,
)
from .metrics import evaluate_systems
from .plots import plot_metric_summary, plot_spectrogram_comparison
from .restore import restore as restore_op
from .restore import restore_baseline
from .synth import generate_corpus
from .training import MODE_CLEAN, MODE_DEGRADED, train_deep_upsampler, train_vocoder

log = logging.getLogger("wavemend")

EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_CAPABILITY = 4

AMR_COMMAND_ENV = "WAVEMEND_AMR_CMD"


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(exc, EXIT_CONFIG)
        except DependencyError as exc:
            _fail(exc, EXIT_DEPENDENCY)
        except CapabilityError as exc:
            _fail(exc, EXIT_CAPABILITY)
        except (WavemendError, FileNotFoundError, ValueError) as exc:
            _fail(exc, 1)

    return wrapper


def _fail(exc, code):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


@dataclass
class AppContext:
    config: ExperimentConfig
    run: RunDirectory
    force: bool
    workers: int


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="YAML experiment configuration.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--run-dir", type=click.Path(), default=None, help="Override the run directory.")
@click.option("--force", is_flag=True, help="Overwrite existing artifacts.")
@click.option("--workers", type=int, default=1, show_default=True,
              help="Worker pool size for per-utterance fan-out.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Dotted config override, e.g. vocoder_training.steps=50.")
@click.pass_context
@handle_errors
def cli(ctx, config_path, seed, run_dir, force, workers, overrides):
    """Speech restoration toolkit: degrade, train, restore, evaluate."""
    config = load_config(config_path) if config_path else ExperimentConfig()
    if overrides:
        config = apply_overrides(config, overrides)
    if seed is not None:
        config.seed = seed
    if run_dir is not None:
        config.paths = replace(config.paths, run_dir=run_dir)
    ctx.obj = AppContext(
        config=config,
        run=RunDirectory(config.paths.run_dir),
        force=force,
        workers=max(1, workers),
    )


@cli.command("synth-corpus")
@click.option("--n", default=10, show_default=True, help="Number of utterances.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_obj
@handle_errors
def synth_corpus(app, n, out_dir):
    """Generate a deterministic synthetic speech corpus plus manifest."""
    manifest = Path(out_dir) / "manifest.jsonl"
    if manifest.exists() and not app.force:
        raise ConfigError(f"{manifest} already exists; use --force to regenerate")
    path = generate_corpus(n, app.config.seed, out_dir)
    click.echo(f"wrote {n} utterances, manifest {path}")


def _degrade_task(args):
    entry_id, clean_path, out_path, spec = args
    try:
        w = load_wav(clean_path)
        save_wav(apply_degradation(w, spec), out_path)
        return entry_id, None
    except Exception as exc:  # per-file failures are reported, not fatal mid-run
        return entry_id, f"{type(exc).__name__}: {exc}"


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--kind", type=click.Choice(["lpc10", "clip", "external"]), default=None,
              help="Degradation kind (default: from config).")
@click.option("--clip-fraction", type=float, default=None)
@click.option("--command", "command_template", default=None,
              help=f"External codec template with {{in}}/{{out}}; defaults to ${AMR_COMMAND_ENV}.")
@click.pass_obj
@handle_errors
def degrade(app, manifest_path, out_dir, kind, clip_fraction, command_template):
    """Apply the lossy degradation to every utterance in a manifest."""
    spec = _resolve_degradation(app.config, kind, clip_fraction, command_template)
    entries = read_manifest(manifest_path)
    base = Path(manifest_path).parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    jobs = []
    for e in sorted(entries, key=lambda e: e.id):
        clean = Path(e.clean_path)
        if not clean.is_absolute():
            clean = base / clean
        jobs.append((e.id, clean, out / f"{e.id}.wav", spec))

    if app.workers > 1:
        with ProcessPoolExecutor(max_workers=app.workers) as pool:
            results = list(pool.map(_degrade_task, jobs))
    else:
        results = [_degrade_task(j) for j in jobs]

    failures = [(i, msg) for i, msg in results if msg]
    ok_ids = {i for i, msg in results if not msg}
    degraded_entries = [
        ManifestEntry(e.id, str((base / e.clean_path) if not Path(e.clean_path).is_absolute() else e.clean_path),
                      degraded_path=f"{e.id}.wav", split=e.split)
        for e in sorted(entries, key=lambda e: e.id) if e.id in ok_ids
    ]
    out_manifest = out / "manifest.jsonl"
    write_manifest(degraded_entries, out_manifest)

    click.echo(f"degraded {len(ok_ids)}/{len(entries)} utterances -> {out_manifest}")
    if failures:
        for utt, msg in failures:
            log.error("degrade failed for %s: %s", utt, msg)
        _fail(WavemendError(f"{len(failures)} utterance(s) failed; see log"), 1)


def _resolve_degradation(config, kind, clip_fraction, command_template):
    if kind is None:
        return config.degradation
    params = {}
    if kind == "clip":
        params["clip_fraction"] = clip_fraction if clip_fraction is not None else \
            config.degradation.params.get("clip_fraction", 0.25)
    if kind == "external":
        template = command_template or os.environ.get(AMR_COMMAND_ENV)
        if not template:
            raise CapabilityError(
                f"external degradation needs --command or ${AMR_COMMAND_ENV}"
            )
        params["command"] = template
    return DegradationSpec(kind, params)


def _write_losses(path, losses):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        writer.writerows((i + 1, l) for i, l in enumerate(losses))


def _manifest_or_config(app, manifest_path):
    path = manifest_path or app.config.paths.manifest
    if not path:
        raise ConfigError("no manifest given (use --manifest or set paths.manifest)")
    return Path(path)


@cli.command("train-vocoder")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice([MODE_CLEAN, MODE_DEGRADED]), default=None,
              help="Conditioning mel source (default: from config).")
@click.option("--steps", type=int, default=None)
@click.option("--resume", is_flag=True, help="Continue from the existing checkpoint.")
@click.pass_obj
@handle_errors
def train_vocoder_cmd(app, manifest_path, mode, steps, resume):
    """Stage 1: train the diffusion vocoder."""
    cfg = app.config
    mode = mode or cfg.vocoder_training.mode
    steps = steps or cfg.vocoder_training.steps
    manifest = _manifest_or_config(app, manifest_path)
    entries = read_manifest(manifest)

    run = app.run.create(cfg, force=True)
    tag = "clean" if mode == MODE_CLEAN else "degraded"
    ckpt = run.checkpoints / f"vocoder-{tag}.pt"
    resume_from = None
    if ckpt.exists():
        if resume:
            resume_from = ckpt
        elif not app.force:
            raise ConfigError(f"{ckpt} already exists; use --resume or --force")

    result = train_vocoder(
        entries, mode, cfg.vocoder,
        steps=steps, seed=cfg.seed, lr=cfg.vocoder_training.lr,
        batch_size=cfg.vocoder_training.batch_size,
        crop_samples=cfg.vocoder_training.crop_samples,
        checkpoint_path=ckpt, resume_from=resume_from,
        base_dir=manifest.parent,
    )
    _write_losses(run.reports / f"vocoder-{tag}-losses.csv", result.losses)
    final = result.losses[-1] if result.losses else float("nan")
    click.echo(f"vocoder ({mode}) trained to step {steps}, final loss {final:.4f} -> {ckpt}")


@cli.command("train-upsampler")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--vocoder-checkpoint", "vocoder_ckpt", type=click.Path(), default=None)
@click.option("--resume", is_flag=True)
@click.pass_obj
@handle_errors
def train_upsampler_cmd(app, manifest_path, steps, vocoder_ckpt, resume):
    """Stage 2: train the deep CNN upsampler against the frozen reference."""
    cfg = app.config
    steps = steps or cfg.upsampler_training.steps
    manifest = _manifest_or_config(app, manifest_path)
    entries = read_manifest(manifest)

    run = app.run.create(cfg, force=True)
    vocoder_ckpt = Path(vocoder_ckpt) if vocoder_ckpt else run.checkpoints / "vocoder-clean.pt"
    if not vocoder_ckpt.exists():
        raise DependencyError(
            f"no clean-trained vocoder checkpoint at {vocoder_ckpt}; "
            f"run train-vocoder --mode {MODE_CLEAN} first"
        )
    ckpt = run.checkpoints / "upsampler.pt"
    resume_from = None
    if ckpt.exists():
        if resume:
            resume_from = ckpt
        elif not app.force:
            raise ConfigError(f"{ckpt} already exists; use --resume or --force")

    result = train_deep_upsampler(
        entries, vocoder_ckpt,
        steps=steps, seed=cfg.seed, lr=cfg.upsampler_training.lr,
        batch_size=cfg.upsampler_training.batch_size,
        crop_frames=cfg.upsampler_training.crop_frames,
        checkpoint_path=ckpt, resume_from=resume_from,
        base_dir=manifest.parent,
    )
    _write_losses(run.reports / "upsampler-losses.csv", result.losses)
    final = result.losses[-1] if result.losses else float("nan")
    click.echo(f"upsampler trained to step {steps}, final loss {final:.4f} -> {ckpt}")


@cli.command("restore")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(),
              help="Manifest with degraded_path rows.")
@click.option("--system", type=click.Choice(["moddw", "dw"]), default="moddw",
              show_default=True, help="moddw: deep upsampler + clean vocoder; dw: baseline.")
@click.option("--vocoder-checkpoint", "vocoder_ckpt", type=click.Path(), default=None)
@click.option("--upsampler-checkpoint", "upsampler_ckpt", type=click.Path(), default=None)
@click.pass_obj
@handle_errors
def restore_cmd(app, manifest_path, system, vocoder_ckpt, upsampler_ckpt):
    """Restore every degraded utterance in a manifest."""
    cfg = app.config
    run = app.run
    entries = read_manifest(manifest_path)
    base = Path(manifest_path).parent

    if system == "moddw":
        vocoder_ckpt = Path(vocoder_ckpt) if vocoder_ckpt else run.checkpoints / "vocoder-clean.pt"
        upsampler_ckpt = Path(upsampler_ckpt) if upsampler_ckpt else run.checkpoints / "upsampler.pt"
        for p, stage in ((vocoder_ckpt, "train-vocoder"), (upsampler_ckpt, "train-upsampler")):
            if not p.exists():
                raise DependencyError(f"missing checkpoint {p}; run {stage} first")
    else:
        vocoder_ckpt = Path(vocoder_ckpt) if vocoder_ckpt else run.checkpoints / "vocoder-degraded.pt"
        if not vocoder_ckpt.exists():
            raise DependencyError(
                f"missing checkpoint {vocoder_ckpt}; run train-vocoder --mode {MODE_DEGRADED} first"
            )

    out_dir = run.restored / system
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(entries, key=lambda e: e.id)
    for i, e in enumerate(ordered):
        if not e.degraded_path:
            raise ConfigError(f"manifest row {e.id!r} has no degraded_path")
        p = Path(e.degraded_path)
        degraded = load_wav(p if p.is_absolute() else base / p)
        seed = cfg.seed + i
        if system == "moddw":
            out = restore_op(degraded, upsampler_ckpt, vocoder_ckpt, seed=seed)
        else:
            out = restore_baseline(degraded, vocoder_ckpt, seed=seed)
        save_wav(out, out_dir / f"{e.id}.wav")
        log.info("restored %s (%s, seed %d)", e.id, system, seed)
    click.echo(f"restored {len(ordered)} utterances -> {out_dir}")


@cli.command("evaluate")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--system", "system_specs", multiple=True, required=True, metavar="NAME=DIR",
              help="System output directory, repeatable (e.g. Degraded=out/degraded).")
@click.option("--sample-n", type=int, default=None)
@click.pass_obj
@handle_errors
def evaluate_cmd(app, manifest_path, system_specs, sample_n):
    """Score systems against clean references; write CSVs, table, figure."""
    cfg = app.config
    systems = {}
    for item in system_specs:
        if "=" not in item:
            raise ConfigError(f"--system needs NAME=DIR, got {item!r}")
        name, _, d = item.partition("=")
        systems[name] = Path(d)

    entries = read_manifest(manifest_path)
    report = evaluate_systems(
        entries, systems,
        metrics=cfg.evaluation.metrics,
        sample_n=sample_n if sample_n is not None else cfg.evaluation.sample_n,
        seed=cfg.seed,
        base_dir=Path(manifest_path).parent,
        external_commands=cfg.evaluation.external_commands,
        workers=app.workers,
    )
    run = app.run.create(cfg, force=True)
    per_utt, agg = report.write_csv(run.reports)
    table = report.format_table()
    (run.reports / "aggregate.txt").write_text(table + "\n")
    figure = plot_metric_summary(report, run.figures / "metrics.png")
    click.echo(table)
    click.echo(f"\nreports: {per_utt}, {agg}\nfigure: {figure}")


@cli.command("plot-spec")
@click.option("--clean", required=True, type=click.Path())
@click.option("--degraded", required=True, type=click.Path())
@click.option("--baseline", required=True, type=click.Path())
@click.option("--restored", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Defaults to <run-dir>/figures/spectrograms.png.")
@click.option("--labels", default="Original,Degraded,Baseline,Restored", show_default=True)
@click.pass_obj
@handle_errors
def plot_spec(app, clean, degraded, baseline, restored, out_path, labels):
    """Four-panel spectrogram comparison on a shared color scale."""
    paths = [clean, degraded, baseline, restored]
    waveforms = [load_wav(p) for p in paths]
    names = [s.strip() for s in labels.split(",")]
    if len(names) != 4:
        raise ConfigError("--labels needs exactly four comma-separated names")
    out = Path(out_path) if out_path else app.run.figures / "spectrograms.png"
    result = plot_spectrogram_comparison(waveforms, names, out)
    click.echo(f"figure: {result}")


def main():
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    cli()


if __name__ == "__main__":
    main()
