"""Run configuration dataclasses with strict JSON loading."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

# Learning rate reported as optimal after tuning; 5e-4 stays the default.
ALTERNATE_LR = 0.000164


@dataclass
class ModelConfig:
    atom_dim: int = 78
    cell_dim: int = 954
    graph_layer: str = "gat"          # gat | gcn
    encoder_mode: str = "add"         # add | concat
    gat_heads: int = 4
    gat_head_dim: int = 32
    negative_slope: float = 0.2
    lstm_hidden: int = 128
    pool_heads: int = 1
    share_projections: bool = True
    cell_hidden: tuple = (2048, 512)
    ctx_dim: int = 256
    head_hidden: int = 64
    dropout: float = 0.2
    ln_eps: float = 1e-5

    @property
    def hidden(self) -> int:
        return self.gat_heads * self.gat_head_dim

    @property
    def pool_dim(self) -> int:
        return self.hidden // self.pool_heads

    @property
    def fusion_dim(self) -> int:
        return 4 * self.pool_dim + self.ctx_dim

    def validate(self, path="model"):
        if self.graph_layer not in ("gat", "gcn"):
            raise ConfigError(f"{path}.graph_layer: expected 'gat' or 'gcn', got {self.graph_layer!r}")
        if self.encoder_mode not in ("add", "concat"):
            raise ConfigError(f"{path}.encoder_mode: expected 'add' or 'concat', got {self.encoder_mode!r}")
        for name in ("atom_dim", "cell_dim", "gat_heads", "gat_head_dim", "lstm_hidden", "pool_heads",
                     "ctx_dim", "head_hidden"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{path}.{name}: must be positive")
        if self.hidden % self.pool_heads:
            raise ConfigError(f"{path}.pool_heads: must divide {self.hidden}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"{path}.dropout: must be in [0, 1)")
        self.cell_hidden = tuple(int(w) for w in self.cell_hidden)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 128
    seed: int = 0
    lr: float = 0.0005
    lr_gamma: float = 0.7
    lr_step: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    amp: bool = True
    mse_weight: float = 0.1
    n_partitions: int = 5
    folds: int = 5
    split_unit: str = "triplet"       # triplet | pair
    init_scale: float = 2.0 ** 16
    growth_interval: int = 2000
    threshold: float = 0.5
    jobs: int = 1

    def validate(self, path="train"):
        for name in ("epochs", "batch_size", "lr", "lr_gamma", "lr_step", "adam_eps", "init_scale",
                     "growth_interval", "jobs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{path}.{name}: must be positive")
        if self.seed < 0:
            raise ConfigError(f"{path}.seed: must be non-negative")
        if self.n_partitions < 3:
            raise ConfigError(f"{path}.n_partitions: need at least 3 (train/val/test)")
        if not 1 <= self.folds <= self.n_partitions:
            raise ConfigError(f"{path}.folds: must be between 1 and n_partitions={self.n_partitions}")
        if self.split_unit not in ("triplet", "pair"):
            raise ConfigError(f"{path}.split_unit: expected 'triplet' or 'pair'")
        if self.mse_weight < 0:
            raise ConfigError(f"{path}.mse_weight: must be >= 0")


@dataclass
class RunConfig:
    triplets: str = "triplets.csv"
    expression: str = "expression.csv"
    out_dir: str = "runs/adgsyn"
    expect_oneil: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self):
        self.model.validate("model")
        self.train.validate("train")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"]["cell_hidden"] = list(self.model.cell_hidden)
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    kwargs = {}
    for key, value in data.items():
        f = names[key]
        sub = {"model": ModelConfig, "train": TrainConfig}.get(key) if cls is RunConfig else None
        if sub is not None:
            kwargs[key] = _build(sub, value, f"{path}.{key}" if path else key)
            continue
        default = f.default if f.default is not dataclasses.MISSING else None
        kwargs[key] = _coerce(value, default, f"{path}.{key}" if path else key)
    return cls(**kwargs)


def _coerce(value, default, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) for v in value):
            raise ConfigError(f"{path}: expected a list of integers")
        return tuple(value)
    return value


def run_config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "").validate()


def load_run_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return run_config_from_dict(data)


def model_config_from_dict(data: dict) -> ModelConfig:
    cfg = _build(ModelConfig, data, "model")
    cfg.validate("model")
    return cfg
