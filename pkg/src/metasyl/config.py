"""Experiment configuration: typed settings with strict JSON round-trips.

A config file plus a seed fully determines a run (the determinism contract
covers checkpoints, logs, and reports).  Configs are JSON — the runtime
floor for this package (Python 3.10) predates the stdlib TOML parser, and
JSON keeps the dependency list flat.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .seq2seq import ModelConfig

MODES = (
    "meta-train",
    "eval-100shot",
    "ease",
    "pos-newphonemes",
    "pos-length",
    "pos-universals",
)


@dataclass(frozen=True)
class MetaSettings:
    """Knobs for meta_train; desk-scale defaults."""

    n_languages: int = 2000
    n_passes: int = 1
    warmup_episodes: int = 0
    n_holdout: int = 100
    eval_every: int = 100
    patience: int = 10
    n_train: int = 100
    n_test: int = 100
    inner_lr: float = 1.0
    inner_steps: int = 1
    meta_lr: float = 0.001
    order: str = "first"
    eval_k: int = 100
    eval_inner_steps: int | None = None
    kind: str = "consistent"
    max_len: int = 5
    batch_size: int = 100


@dataclass(frozen=True)
class EaseSettings:
    """Knobs for ease-of-learning analyses (constraint-set, consistency)."""

    n_languages: int = 20      # languages per condition cell
    cap: int = 1600            # largest training-set size tried (censored)
    step: int = 100            # ladder increment; results are multiples of this
    target: float = 0.95       # exact-match accuracy criterion
    n_test: int = 100
    max_len: int = 5
    lr: float = 1.0
    batch_size: int = 100
    plateau_tol: float = 1e-4  # relative train-loss improvement threshold
    plateau_window: int = 50   # consecutive sub-threshold epochs = converged
    epoch_cap: int = 5000
    check_every: int = 25      # test-accuracy early-exit cadence, in epochs


@dataclass(frozen=True)
class PosSettings:
    """Knobs for poverty-of-the-stimulus analyses."""

    n_languages: int = 20
    k: int = 100
    inner_lr: float = 1.0
    inner_steps: int = 1
    batch_size: int = 100
    n_train: int = 100
    n_test: int = 100
    max_len: int = 5


@dataclass(frozen=True)
class EvalSettings:
    """Knobs for plain 100-shot evaluation over fresh languages."""

    n_languages: int = 50
    k: int = 100
    inner_lr: float = 1.0
    inner_steps: int = 1
    batch_size: int = 100
    n_train: int = 100
    n_test: int = 100
    max_len: int = 5
    kind: str = "consistent"


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "meta-train"
    seed: int = 0
    out: str = "runs"
    checkpoint: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    meta: MetaSettings = field(default_factory=MetaSettings)
    ease: EaseSettings = field(default_factory=EaseSettings)
    pos: PosSettings = field(default_factory=PosSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data)


def _build(cls, data):
    """Construct a dataclass from a dict, recursing into dataclass fields
    and rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ValueError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    by_name = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(by_name)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if name in _NESTED:
            kwargs[name] = _build(_NESTED[name], value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_NESTED = {
    "model": ModelConfig,
    "meta": MetaSettings,
    "ease": EaseSettings,
    "pos": PosSettings,
    "eval": EvalSettings,
}


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
