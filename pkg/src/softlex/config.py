"""Training and model configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .encoder import EncoderConfig
from .errors import ConfigurationError


@dataclass(frozen=True)
class TrainConfig:
    char_dim: int = 50
    bigram_dim: int = 50
    word_dim: int = 50
    hidden_size: int = 200
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 16
    seed: int = 1
    dropout: float = 0.5
    patience: int = 10
    clip_norm: float = 5.0
    eval_batch_size: int = 64
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        for name in ("char_dim", "bigram_dim", "word_dim", "hidden_size", "epochs", "batch_size", "eval_batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.lr < 0:
            raise ConfigurationError("lr must be non-negative")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigurationError("Adamax betas must lie in [0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must lie in [0, 1)")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if isinstance(self.encoder, dict):
            object.__setattr__(self, "encoder", EncoderConfig(**self.encoder))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "encoder" in data:
            enc = data["encoder"]
            enc_known = {f.name for f in fields(EncoderConfig)}
            bad = set(enc) - enc_known
            if bad:
                raise ConfigurationError(f"unknown encoder config keys: {sorted(bad)}")
            data["encoder"] = EncoderConfig(**enc)
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        with Path(path).open(encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_encoder(self, **changes) -> "TrainConfig":
        return replace(self, encoder=replace(self.encoder, **changes))
