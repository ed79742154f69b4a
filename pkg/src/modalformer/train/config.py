"""Training configuration and its JSON form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..attention import MODES
from ..losses import LossWeights
from ..modalities.bundle import GROUPS, NAMES
from ..network.model import ModelConfig

LOSS_TERMS = ("mse", "ms_ssim", "perc", "mm")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr_init: float = 3e-4
    lr_final: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    total_iters: int = 2000
    batch: int = 2
    patch: int = 32
    seed: int = 0
    augment: bool = True
    # ablation toggles
    injection: str = "cm_msa"
    modality_groups: list[str] = field(default_factory=lambda: list(GROUPS))
    loss_terms: list[str] = field(default_factory=lambda: list(LOSS_TERMS))
    # architecture and bookkeeping
    base_channels: int = 16
    heads: list[int] = field(default_factory=lambda: [1, 2, 4])
    ms_ssim_scales: int = 3
    grad_clip: Optional[float] = 1.0
    log_every: int = 20
    eval_every: int = 200

    def __post_init__(self):
        if self.patch % 8 or self.patch <= 0:
            raise ConfigError(f"patch {self.patch} must be a positive multiple of 8")
        if not self.lr_final < self.lr_init:
            raise ConfigError("lr_final must be below lr_init")
        if self.total_iters < 1 or self.batch < 1:
            raise ConfigError("total_iters and batch must be positive")
        if self.injection not in MODES:
            raise ConfigError(f"injection must be one of {MODES}, got {self.injection!r}")
        bad = [g for g in self.modality_groups if g not in GROUPS]
        if bad:
            raise ConfigError(f"unknown modality groups {bad}; known: {list(GROUPS)}")
        bad = [t for t in self.loss_terms if t not in LOSS_TERMS]
        if bad or not self.loss_terms:
            raise ConfigError(f"loss_terms must be a nonempty subset of {LOSS_TERMS}")
        if self.injection != "msa" and not self.modality_groups:
            raise ConfigError(f"injection {self.injection} needs at least one modality group")

    @property
    def modalities(self) -> tuple[str, ...]:
        chosen = {m for g in self.modality_groups for m in GROUPS[g]}
        return tuple(n for n in NAMES if n in chosen)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            base_channels=self.base_channels,
            heads=tuple(self.heads),
            mode=self.injection,
            modalities=self.modalities,
            seed=self.seed,
        )

    def loss_weights(self) -> LossWeights:
        t = set(self.loss_terms)
        return LossWeights(
            ms_ssim_scales=self.ms_ssim_scales,
            use_mse="mse" in t,
            use_ms_ssim="ms_ssim" in t,
            use_perc="perc" in t,
            use_mm="mm" in t,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")
