"""Runtime configuration, loaded from a single TOML file.

Sections: [gate] for the reflex usability thresholds, [train] for the
optimizer recipe, [augment] for named augmentation mixes, [feedback] for the
confidence/quantile knobs of the retake guidance, [service] for the HTTP
server.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class GateConfig:
    min_area_frac: float = 0.002
    max_area_frac: float = 0.25
    max_elongation: float = 3.0

    def __post_init__(self):
        if not 0 < self.min_area_frac < self.max_area_frac:
            raise ConfigurationError("need 0 < min_area_frac < max_area_frac")
        if self.max_elongation < 1.0:
            raise ConfigurationError("max_elongation must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr: float = 0.001
    weight_decay: float = 0.01
    max_epochs: int = 50
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    hidden_units: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be >= 1")


@dataclass(frozen=True)
class FeedbackConfig:
    confidence_threshold: float = 0.8
    p_threshold: float = 0.001
    low_quantile: float = 25.0
    high_quantile: float = 75.0
    min_samples: int = 20


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    bundle_path: str = ""
    detector: str = "fallback"  # fallback | remote | auto
    retain_uploads: bool = False
    upload_dir: str = "uploads"
    max_body_bytes: int = 10 * 1024 * 1024


@dataclass(frozen=True)
class AppConfig:
    gate: GateConfig = field(default_factory=GateConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    augment_mixes: dict = field(default_factory=dict)


def _build(cls, section: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in [{name}]: {sorted(unknown)}")
    if "betas" in section:
        section = dict(section, betas=tuple(section["betas"]))
    return cls(**section)


def load_config(path=None) -> AppConfig:
    if path is None:
        return AppConfig()
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    cfg = AppConfig(
        gate=_build(GateConfig, raw.get("gate", {}), "gate"),
        train=_build(TrainConfig, raw.get("train", {}), "train"),
        feedback=_build(FeedbackConfig, raw.get("feedback", {}), "feedback"),
        service=_build(ServiceConfig, raw.get("service", {}), "service"),
        augment_mixes=raw.get("augment", {}).get("mixes", {}),
    )
    return cfg


def with_seed(config: AppConfig, seed: int) -> AppConfig:
    return replace(config, train=replace(config.train, seed=seed))
