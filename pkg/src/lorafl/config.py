"""Scenario configuration: schema, defaults, YAML load/save and validation."""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

from . import datasets, fl
from .codec import CodecConfig
from .fl import Dataset, TrainConfig
from .linksim import InterferenceConfig
from .orchestrator import ScheduleConfig, TopologyConfig
from .phy import RadioConfig, SfTables


class ConfigError(ValueError):
    pass


DATA_KINDS = ("digits", "blobs", "mnist")
MNIST_SIDE = 28


@dataclass(frozen=True)
class DataConfig:
    kind: str = "digits"
    n_train: int = 2000
    n_test: int = 1000
    n_classes: int = 10
    # digits: synthetic side x side images with a blank border
    image_side: int = 28
    margin: int = 4
    noise: float = 0.3
    # blobs: Gaussian clusters
    n_features: int = 64
    separation: float = 0.6
    informative: int | None = None
    # mnist: IDX files
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in DATA_KINDS:
            raise ValueError(f"kind must be one of {', '.join(DATA_KINDS)}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be positive")
        if self.kind == "mnist" and not all(
            (self.train_images, self.train_labels, self.test_images, self.test_labels)
        ):
            raise ValueError("mnist data needs train/test image and label paths")

    @property
    def input_dim(self) -> int:
        if self.kind == "blobs":
            return self.n_features
        if self.kind == "digits":
            return self.image_side**2
        return MNIST_SIDE**2


@dataclass(frozen=True)
class AnalyticalConfig:
    distance_resolution: float = 0.1

    def __post_init__(self) -> None:
        if not self.distance_resolution > 0:
            raise ValueError("distance_resolution must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "default"
    seed: int = 0
    replications: int = 1
    workers: int = 1
    output: str = "results"
    radio: RadioConfig = field(default_factory=RadioConfig)
    tables: SfTables = field(default_factory=SfTables)
    interference: InterferenceConfig = field(default_factory=InterferenceConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    analytical: AnalyticalConfig = field(default_factory=AnalyticalConfig)

    def __post_init__(self) -> None:
        if self.replications < 1 or self.workers < 1:
            raise ValueError("replications and workers must be positive")
        m = self.schedule.clients_per_round
        if m > self.radio.channel_count:
            raise ValueError(
                f"schedule.clients_per_round={m} exceeds radio.channel_count={self.radio.channel_count}"
            )
        if m > self.topology.n_clients:
            raise ValueError("schedule.clients_per_round exceeds topology.n_clients")
        if self.train.layers[0] != self.data.input_dim or self.train.layers[-1] != self.data.n_classes:
            raise ValueError(
                f"train.layers must start at the input width {self.data.input_dim} "
                f"and end at data.n_classes={self.data.n_classes}"
            )
        if self.data.n_train < self.topology.n_clients:
            raise ValueError("data.n_train must be at least topology.n_clients")

    def replace(self, **changes: Any) -> "ScenarioConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"schedule.sf": 12})``."""
        raw = to_dict(self)
        for key, value in changes.items():
            node = raw
            *head, last = key.split(".")
            for part in head:
                node = node[part]
            node[last] = to_dict(value) if dataclasses.is_dataclass(value) else _plain(value)
        return from_dict(raw)


# -- (de)serialization ------------------------------------------------------


def _plain(value: Any) -> Any:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def to_dict(obj: Any) -> dict[str, Any]:
    return {f.name: (to_dict(v) if dataclasses.is_dataclass(v := getattr(obj, f.name)) else _plain(v))
            for f in dataclasses.fields(obj)}


def _convert(tp: Any, value: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _build(tp, value, path)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if tp is Fraction:
        try:
            return Fraction(str(value)).limit_denominator(1000)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{path}: invalid rate {value!r}") from exc
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        return tuple(value)
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        kt, vt = args
        return {_convert(kt, k, f"{path}.{k}"): _convert(vt, v, f"{path}.{k}") for k, v in value.items()}
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            try:
                return int(str(value), 10)
            except ValueError:
                raise ConfigError(f"{path}: expected an integer, got {value!r}") from None
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls: type, raw: dict[str, Any], path: str) -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(raw) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown field(s): {', '.join(where + u for u in unknown)}")
    kwargs = {}
    for name, value in raw.items():
        sub = f"{path}.{name}" if path else name
        kwargs[name] = _convert(hints[name], value, sub)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or 'scenario'}: {exc}") from exc


def from_dict(raw: dict[str, Any] | None) -> ScenarioConfig:
    return _build(ScenarioConfig, dict(raw or {}), "")


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(raw)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg))


# -- data -------------------------------------------------------------------


def build_data(cfg: ScenarioConfig, seed: int) -> tuple[list[Dataset], Dataset]:
    """Client shards and the server's test set for one replication."""
    d = cfg.data
    if d.kind == "digits":
        rng = fl.stream(seed, fl.DATA)
        train, protos = datasets.synthetic_digits(
            d.n_train, d.n_classes, rng, side=d.image_side, margin=d.margin, noise=d.noise
        )
        test = datasets.digits_from_prototypes(protos, d.n_test, rng, noise=d.noise, margin=d.margin)
    elif d.kind == "blobs":
        rng = fl.stream(seed, fl.DATA)
        train, centers = datasets.gaussian_blobs(
            d.n_train, d.n_features, d.n_classes, rng, d.separation, d.informative
        )
        test = datasets.blobs_from_centers(centers, d.n_test, rng)
    else:
        train = datasets.load_mnist(d.train_images, d.train_labels, d.n_train)
        test = datasets.load_mnist(d.test_images, d.test_labels, d.n_test)
    shards = fl.partition_dataset(train, cfg.topology.n_clients, fl.stream(seed, fl.PARTITION))
    return shards, test
