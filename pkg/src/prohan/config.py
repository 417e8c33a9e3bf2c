"""Model and training configuration."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

ABLATIONS = ("none", "drop-intra", "drop-inter", "drop-utterance", "homogeneous")


@dataclass
class ModelConfig:
    word_dim: int = 64  # d_e
    lstm_hidden: int = 32  # per direction
    attn_dim: int = 64
    pool_hidden: int = 64  # MLP-attention pooling
    graph_dim: int = 128  # d_g
    layers: int = 2  # L
    slot_hidden: int = 128
    label_dim: int = 32
    leaky_slope: float = 0.2
    intent_feed: str = "predicted"  # or "gold"

    @property
    def text_dim(self) -> int:
        return 2 * self.lstm_hidden + self.attn_dim

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.intent_feed not in ("predicted", "gold"):
            raise ValueError(f"intent_feed must be 'predicted' or 'gold', got {self.intent_feed!r}")


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 200
    lr: float = 1e-3
    clip_norm: float = 5.0
    ablation: str = "none"
    patience: int = 0  # epochs without dev improvement before stopping; 0 disables
    stop_when_perfect: bool = False  # stop once train and dev overall accuracy are both 1.0
    eval_train: bool = False
    output_dir: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
