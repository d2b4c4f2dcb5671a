"""Run configuration: every hyperparameter of the pipeline in one place.

The flat key=value config file format maps 1:1 onto the fields of
:class:`RunConfig`. Unknown keys are rejected so typos in sweep scripts fail
loudly instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configurations."""


@dataclass
class RunConfig:
    # windowing
    lookback: int = 96          # input window length T
    horizon: int = 16           # forecast length H
    # patching / embedding
    patch_len: int = 16         # C
    stride: int = 8             # S
    d_model: int = 64           # D
    # backbone
    n_layers: int = 3
    n_heads: int = 4
    vocab_size: int = 1000
    max_positions: int = 0      # 0 -> exactly the prompt length
    causal: bool = True
    # prototypes and support set
    n_prototypes: int = 100     # U
    queue_size: int = 2000      # q, must be a multiple of n_prototypes
    top_k: int = 8
    tau: float = 0.1
    loss_weight: float = 0.01   # weight on the contrastive + prototype terms
    vocab_sample: int = 0       # 0 = full vocabulary in the prototype loss
    # normalization
    revin_affine: bool = True
    revin_eps: float = 1e-5
    # series embedding / output head variants
    series_pooling: str = "mean"     # "mean" or "flatten"
    project_positions: str = "all"   # "all" or "patches"
    # training
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 10
    max_steps: int = 0          # 0 = no step cap
    patience: int = 3
    seed: int = 0
    few_shot_fraction: float = 1.0
    train_frac: float = 0.7
    val_frac: float = 0.1
    # ablations
    disable_nncl: bool = False
    disable_proto: bool = False
    # numerics
    dtype: str = "float64"

    def __post_init__(self):
        self.validate()

    # -- derived quantities ------------------------------------------------

    @property
    def n_patches(self) -> int:
        return (self.lookback - self.patch_len) // self.stride + 2

    @property
    def prompt_len(self) -> int:
        return self.n_patches + self.top_k

    def positions(self) -> int:
        return self.max_positions if self.max_positions > 0 else self.prompt_len

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if self.lookback < 1 or self.horizon < 1:
            raise ConfigError("lookback and horizon must be positive")
        if not (1 <= self.stride <= self.patch_len <= self.lookback):
            raise ConfigError(
                f"need 1 <= stride <= patch_len <= lookback, got "
                f"stride={self.stride} patch_len={self.patch_len} lookback={self.lookback}"
            )
        if self.d_model < 1 or self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be positive and divisible by n_heads")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        if self.n_prototypes < 1 or self.n_prototypes >= self.vocab_size:
            raise ConfigError("need 1 <= n_prototypes < vocab_size")
        if self.queue_size <= self.n_prototypes or self.queue_size % self.n_prototypes != 0:
            raise ConfigError("queue_size must be a multiple of n_prototypes and larger than it")
        if self.top_k < 0:
            raise ConfigError("top_k must be >= 0")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.loss_weight < 0:
            raise ConfigError("loss_weight must be >= 0")
        if self.revin_eps <= 0:
            raise ConfigError("revin_eps must be > 0")
        if self.series_pooling not in ("mean", "flatten"):
            raise ConfigError(f"unknown series_pooling {self.series_pooling!r}")
        if self.project_positions not in ("all", "patches"):
            raise ConfigError(f"unknown project_positions {self.project_positions!r}")
        if not (0.0 < self.few_shot_fraction <= 1.0):
            raise ConfigError("few_shot_fraction must be in (0, 1]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unknown dtype {self.dtype!r}")
        if self.max_positions and self.max_positions < self.prompt_len:
            raise ConfigError("max_positions smaller than the prompt length")

    # -- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values: dict = {}
        types = {f.name: f.type for f in fields(cls)}
        defaults = {f.name: f.default for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, val, defaults[key])
        return cls.from_dict(values)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text())


def _coerce(key: str, val: str, default):
    if isinstance(default, bool):
        low = val.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {val!r}")
    if isinstance(default, int):
        try:
            return int(val)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected an integer, got {val!r}") from None
    if isinstance(default, float):
        try:
            return float(val)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected a number, got {val!r}") from None
    return val


def config_to_json(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
