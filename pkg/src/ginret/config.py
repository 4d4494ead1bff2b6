"""Flat run configuration; defaults are the full-scale training hyperparameters."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .loss import LossConfig
from .model import ModelConfig
from .trainer import TrainConfig

CONFIG_ENV = "GINRET_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    corpus: str = ""
    out_dir: str = "run"
    # vocabulary / graph
    max_words: int = 10_000
    min_doc_freq: int = 1
    normalize_counts: bool = False
    k: int = 8
    # model
    order: int = 3
    channels: tuple[int, int] = (16, 32)
    common_dim: int = 1024
    dropout: float = 0.2
    image_hidden: tuple[int, ...] = ()
    score_mode: str = "hadamard"
    precision: str = "float64"
    # loss
    margin: float = 0.6
    lam: float = 0.35
    l2: float = 0.005
    # training
    batch_size: int = 200
    q1: int = 100
    q2: int = 100
    epochs: int = 50
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    total_pos: int = 40_000
    total_neg: int = 40_000
    mode: str = "deterministic"
    workers: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "image_hidden", tuple(self.image_hidden))
        if self.mode not in ("deterministic", "fast"):
            raise ConfigError("mode must be 'deterministic' or 'fast'")
        if self.k < 1 or self.max_words < 2 or self.min_doc_freq < 1:
            raise ConfigError("k >= 1, max_words >= 2 and min_doc_freq >= 1 required")
        try:
            self.loss_config()
            self.train_config()
            self.model_config(n_vertices=1, image_dim=1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def loss_config(self) -> LossConfig:
        return LossConfig(self.margin, self.lam, self.l2)

    def train_config(self, checkpoint_path=None) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, q1=self.q1, q2=self.q2, epochs=self.epochs,
            learning_rate=self.learning_rate, adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps, seed=self.seed, total_pos=self.total_pos, total_neg=self.total_neg,
            deterministic=self.mode == "deterministic", workers=self.workers,
            checkpoint_path=checkpoint_path, checkpoint_every=self.checkpoint_every,
        )

    def model_config(self, n_vertices: int, image_dim: int) -> ModelConfig:
        return ModelConfig(
            n_vertices=n_vertices, image_dim=image_dim, channels=self.channels, order=self.order,
            common_dim=self.common_dim, dropout=self.dropout, image_hidden=self.image_hidden,
            score_mode=self.score_mode, seed=self.seed, dtype=self.precision,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["image_hidden"] = list(self.image_hidden)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _coerce(name: str, text: str):
    """Parse a ``--set key=value`` override into the field's type."""
    default = getattr(RunConfig(), name)
    if isinstance(default, bool):
        if text.lower() not in ("true", "false", "1", "0"):
            raise ConfigError(f"{name}: expected a boolean, got {text!r}")
        return text.lower() in ("true", "1")
    if isinstance(default, tuple):
        return tuple(int(v) for v in text.split(",") if v)
    try:
        return type(default)(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {type(default).__name__}") from None


def load_run_config(path=None, overrides=()) -> RunConfig:
    """Config file (explicit path, else ``$GINRET_CONFIG``, else defaults)
    with ``key=value`` overrides applied on top."""
    path = path or os.environ.get(CONFIG_ENV)
    raw = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if isinstance(raw.get("corpus"), str) and raw["corpus"] and not Path(raw["corpus"]).is_absolute():
            raw["corpus"] = str((p.parent / raw["corpus"]).resolve())
    known = {f.name for f in fields(RunConfig)}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override must be key=value, got {item!r}")
        if key not in known:
            raise ConfigError(f"unknown config key: {key!r}")
        raw[key] = _coerce(key, value)
    return RunConfig.from_dict(raw)
