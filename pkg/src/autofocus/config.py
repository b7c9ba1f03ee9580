"""Run configuration: one flat record, loadable from YAML or JSON, with two presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .attention import ConfigError, FocalSet
from .data.episodes import GeneratorConfig, GeneratorConfigError
from .model import ModelConfig
from .train import TrainConfig


@dataclass
class RunConfig:
    # episode generator
    n_frames: int = 80
    d_appearance: int = 32
    d_motion: int = 32
    noise: float = 0.3
    window: int = 2
    min_duration: int = 3
    max_duration: int = 5
    max_gap: int = 2
    idle_gap: tuple[int, int] = (4, 12)
    # corpus
    episodes: int = 6250
    per_template: int | None = 1
    balance_threshold: float = 0.5
    min_count: int = 30
    split_ratios: tuple[float, float, float] = (0.8, 0.04, 0.16)
    # model
    kind: str = "aft"
    d: int = 64
    heads: int = 4
    layers: int = 2
    d_ff: int = 128
    focal: tuple[int, ...] = (3, 9, 80)
    rnn_hidden: int = 32
    blind_hidden: int = 128
    # optimisation
    epochs: int = 3
    batch_size: int = 32
    lr: float = 1e-3
    max_steps: int | None = None
    # seeds
    data_seed: int = 0
    init_seed: int = 0
    train_seed: int = 0
    world_seed: int = 1234
    # benchmark
    bench_n: int = 1024
    bench_repetitions: int = 5
    # paths
    data_dir: str = "data"
    out: str = "runs"

    def __post_init__(self):
        self.idle_gap = tuple(int(x) for x in self.idle_gap)
        self.split_ratios = tuple(float(x) for x in self.split_ratios)
        self.focal = tuple(int(x) for x in self.focal)
        if len(self.idle_gap) != 2 or len(self.split_ratios) != 3:
            raise ConfigError("idle_gap needs 2 entries and split_ratios 3")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("epochs >= 0, batch_size >= 1 and lr > 0 required")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")
        FocalSet(self.focal)

    def generator(self) -> GeneratorConfig:
        try:
            return GeneratorConfig(
                n_frames=self.n_frames, d_appearance=self.d_appearance, d_motion=self.d_motion,
                noise=self.noise, window=self.window, min_duration=self.min_duration,
                max_duration=self.max_duration, max_gap=self.max_gap, idle_gap=self.idle_gap,
                world_seed=self.world_seed)
        except GeneratorConfigError as exc:
            raise ConfigError(str(exc)) from exc

    def model(self, vocab_size: int, n_classes: int, kind: str | None = None) -> ModelConfig:
        return ModelConfig(
            kind=kind or self.kind, d=self.d, heads=self.heads, layers=self.layers, d_ff=self.d_ff,
            focal=self.focal, max_frames=self.n_frames, d_appearance=self.d_appearance,
            d_motion=self.d_motion, rnn_hidden=self.rnn_hidden, vocab_size=vocab_size,
            n_classes=n_classes, blind_hidden=self.blind_hidden, init_seed=self.init_seed)

    def training(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           seed=self.train_seed, max_steps=self.max_steps)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


def desk() -> RunConfig:
    return RunConfig()


def full() -> RunConfig:
    """Full-width settings: d=512, lr 1e-4, batch 16, 50 epochs."""
    return RunConfig(d=512, heads=8, d_ff=2048, rnn_hidden=256, blind_hidden=512,
                     epochs=50, batch_size=16, lr=1e-4, split_ratios=(0.6, 0.2, 0.2))


PRESETS = {"desk": desk, "full": full}
FIELD_NAMES = frozenset(f.name for f in fields(RunConfig))


def from_mapping(data: dict) -> RunConfig:
    """Build a config from a mapping; an optional ``preset`` key picks the base."""
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    data = dict(data)
    preset = data.pop("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    unknown = set(data) - FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        return PRESETS[preset]().replace(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return from_mapping(data or {})
