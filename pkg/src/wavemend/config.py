"""Experiment configuration (YAML round-trippable) and run directories."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .degrade import DegradationSpec
from .errors import ConfigError
from .mel import MelConfig
from .vocoder import VocoderConfig

DEFAULT_METRICS = ("lsd", "si_sdr", "mcd")


@dataclass(frozen=True)
class VocoderTrainConfig:
    mode: str = "clean-conditioner"
    lr: float = 2e-4
    steps: int = 300
    batch_size: int = 4
    crop_samples: int = 16384


@dataclass(frozen=True)
class UpsamplerTrainConfig:
    lr: float = 1e-3
    steps: int = 500
    batch_size: int = 8
    crop_frames: int = 62


@dataclass(frozen=True)
class EvalConfig:
    metrics: tuple = DEFAULT_METRICS
    sample_n: int | None = None
    external_commands: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "external_commands", dict(self.external_commands))


@dataclass(frozen=True)
class PathsConfig:
    manifest: str | None = None
    run_dir: str = "runs/default"


@dataclass
class ExperimentConfig:
    seed: int = 0
    mel: MelConfig = field(default_factory=MelConfig)
    vocoder: VocoderConfig = field(default_factory=VocoderConfig)
    degradation: DegradationSpec = field(default_factory=lambda: DegradationSpec("lpc10"))
    vocoder_training: VocoderTrainConfig = field(default_factory=VocoderTrainConfig)
    upsampler_training: UpsamplerTrainConfig = field(default_factory=UpsamplerTrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if self.vocoder.mel != self.mel:
            self.vocoder = replace(self.vocoder, mel=self.mel)
        self.validate_values()

    def validate_values(self):
        if self.vocoder_training.lr <= 0 or self.upsampler_training.lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.vocoder_training.steps <= 0 or self.upsampler_training.steps <= 0:
            raise ConfigError("step counts must be positive")
        if self.vocoder_training.batch_size <= 0 or self.upsampler_training.batch_size <= 0:
            raise ConfigError("batch sizes must be positive")
        if self.vocoder_training.mode not in ("clean-conditioner", "degraded-conditioner"):
            raise ConfigError(f"unknown vocoder training mode {self.vocoder_training.mode!r}")

    def validate_paths(self, base_dir=".") -> None:
        """Referenced inputs must be resolvable before a run starts."""
        if self.paths.manifest is not None:
            p = Path(self.paths.manifest)
            if not p.is_absolute():
                p = Path(base_dir) / p
            if not p.exists():
                raise ConfigError(f"manifest path does not exist: {p}")

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "mel": asdict(self.mel),
            "vocoder": {k: v for k, v in asdict(self.vocoder).items() if k != "mel"},
            "degradation": {"kind": self.degradation.kind, "params": dict(self.degradation.params)},
            "vocoder_training": asdict(self.vocoder_training),
            "upsampler_training": asdict(self.upsampler_training),
            "evaluation": {
                "metrics": list(self.evaluation.metrics),
                "sample_n": self.evaluation.sample_n,
                "external_commands": dict(self.evaluation.external_commands),
            },
            "paths": asdict(self.paths),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            mel = MelConfig(**d.get("mel", {}))
            vocoder_d = dict(d.get("vocoder", {}))
            profile = vocoder_d.pop("profile", "full")
            base = VocoderConfig.tiny(mel=mel) if profile == "tiny" else VocoderConfig.full(mel=mel)
            vocoder = VocoderConfig(**{**asdict(base), **vocoder_d, "mel": mel, "profile": profile})
            deg = d.get("degradation", {"kind": "lpc10"})
            return cls(
                seed=d.get("seed", 0),
                mel=mel,
                vocoder=vocoder,
                degradation=DegradationSpec(deg.get("kind", "lpc10"), deg.get("params", {})),
                vocoder_training=VocoderTrainConfig(**d.get("vocoder_training", {})),
                upsampler_training=UpsamplerTrainConfig(**d.get("upsampler_training", {})),
                evaluation=EvalConfig(**d.get("evaluation", {})),
                paths=PathsConfig(**d.get("paths", {})),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(raw)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def apply_overrides(config: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply dotted key=value overrides, e.g. vocoder_training.steps=50."""
    d = config.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, _, raw_value = item.partition("=")
        value = yaml.safe_load(raw_value)
        node = d
        *parents, leaf = dotted.split(".")
        for key in parents:
            if key not in node or not isinstance(node[key], dict):
                raise ConfigError(f"override {item!r}: unknown section {key!r}")
            node = node[key]
        if leaf not in node:
            raise ConfigError(f"override {item!r}: unknown key {leaf!r}")
        node[leaf] = value
    return ExperimentConfig.from_dict(d)


class RunDirectory:
    """Conventional layout for one experiment run.

    The config snapshot is written at creation time, before any training
    step, so every artifact in the tree traces back to it.
    """

    SNAPSHOT_NAME = "config.yaml"

    def __init__(self, root):
        self.root = Path(root)

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def restored(self) -> Path:
        return self.root / "restored"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def figures(self) -> Path:
        return self.root / "figures"

    @property
    def log_path(self) -> Path:
        return self.root / "run.log"

    @property
    def snapshot_path(self) -> Path:
        return self.root / self.SNAPSHOT_NAME

    def create(self, config: ExperimentConfig, force: bool = False) -> "RunDirectory":
        if self.snapshot_path.exists() and not force:
            existing = load_config(self.snapshot_path)
            if existing.to_dict() != config.to_dict():
                raise ConfigError(
                    f"{self.root}: existing run has a different config snapshot; "
                    f"use --force to overwrite"
                )
        for d in (self.root, self.checkpoints, self.restored, self.reports, self.figures):
            d.mkdir(parents=True, exist_ok=True)
        save_config(config, self.snapshot_path)
        return self

    def load_snapshot(self) -> ExperimentConfig:
        return load_config(self.snapshot_path)
