"""Experiment configuration: one JSON document drives the whole pipeline."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from cyclegen.dataio import SurrogateConfig
from cyclegen.errors import ConfigError
from cyclegen.predictor import PredictorConfig, PredictorSpec
from cyclegen.rcgan import GanSpec, TrainConfig

DEFAULT_OUT = "cyclegen_out"


@dataclass(frozen=True)
class DataSource:
    cycles_path: str | None = None
    capacity_path: str | None = None
    battery_id: str | None = None
    surrogate: SurrogateConfig | None = None

    def __post_init__(self):
        canonical = self.cycles_path is not None or self.capacity_path is not None
        if canonical and self.surrogate is not None:
            raise ConfigError("data: give either canonical paths or a surrogate config, not both")
        if canonical and (self.cycles_path is None or self.capacity_path is None):
            raise ConfigError("data: both cycles_path and capacity_path are required")
        if not canonical and self.surrogate is None:
            raise ConfigError("data: no data source configured")


@dataclass(frozen=True)
class Seeds:
    gan: int = 0
    augment: int = 0
    predictor: int = 0


@dataclass(frozen=True)
class EvalConfig:
    models: tuple = ("gru", "lstm")
    perplexity: float = 10.0
    tsne_iterations: int = 1000
    tsne_learning_rate: float = 200.0


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSource
    K: int = 100
    l: int = 128
    m: int = 2
    gan: GanSpec = field(default_factory=GanSpec)
    gan_train: TrainConfig = field(default_factory=TrainConfig)
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    predictor_train: PredictorConfig = field(default_factory=PredictorConfig)
    seeds: Seeds = field(default_factory=Seeds)
    evaluate: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.l < 2:
            raise ConfigError("l must be >= 2")
        if self.m < 0 or 2 * self.m + 1 > self.K:
            raise ConfigError(f"smoothing window 2m+1={2 * self.m + 1} must fit in K={self.K}")
        if self.gan.l != self.l:
            object.__setattr__(self, "gan", replace(self.gan, l=self.l))
        if self.gan_train.seed != self.seeds.gan:
            object.__setattr__(self, "gan_train", replace(self.gan_train, seed=self.seeds.gan))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["evaluate"]["models"] = list(d["evaluate"]["models"])
        d["gan_train"].pop("seed")
        d["gan"].pop("l")
        return d

    def output_dir(self, override=None) -> Path:
        if override:
            return Path(override)
        if self.out_dir:
            return Path(self.out_dir)
        return Path(os.environ.get("CYCLEGEN_OUT", DEFAULT_OUT))


_NESTED = {
    "data": DataSource, "gan": GanSpec, "gan_train": TrainConfig,
    "predictor": PredictorSpec, "predictor_train": PredictorConfig,
    "seeds": Seeds, "evaluate": EvalConfig,
}


def _build(cls, d, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown fields {unknown}")
    kwargs = {}
    for k, v in d.items():
        if cls is ExperimentConfig and k in _NESTED:
            v = _build(_NESTED[k], v, f"{where}.{k}")
        elif cls is DataSource and k == "surrogate" and v is not None:
            v = _build(SurrogateConfig, v, f"{where}.surrogate")
        elif cls is EvalConfig and k == "models":
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def config_from_dict(d: dict) -> ExperimentConfig:
    # a report manifest nests the config under "config"
    if "config" in d and isinstance(d["config"], dict):
        d = d["config"]
    if "gan_train" in d and "seed" in d["gan_train"]:
        raise ConfigError("gan_train.seed is not allowed; use seeds.gan")
    if "data" not in d:
        raise ConfigError("config: missing required field 'data'")
    return _build(ExperimentConfig, d, "config")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return config_from_dict(d)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2))
