"""Run configuration: dataclass sections and the flat key=value text format.

The on-disk form is one dotted key per line (``attention.variant = mfsc``),
serialized in sorted key order so a parse/serialize round trip is canonical.
Conv stages encode as ``channels:kernel:stride`` triples joined by commas.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from . import attention
from .errors import ConfigError, ParseError
from .features import MelConfig
from .speakernet import NetworkConfig, TrainOptions


@dataclass
class FeatureSection:
    sample_rate: int = 16000
    n_mels: int = 64
    frame_len_ms: float = 25.0
    frame_shift_ms: float = 10.0
    n_fft: int = 512
    fmin: float = 0.0
    fmax: float = 0.0
    log_floor: float = 1e-10
    crop_seconds: float = 2.0
    mvn: bool = True
    specaug: bool = False


@dataclass
class NetworkSection:
    in_channels: int = 1
    stages: tuple = ((16, 3, 2), (32, 3, 2), (64, 3, 2))
    embedding_dim: int = 64
    num_speakers: int = 0


@dataclass
class AttentionSection:
    variant: str = "se"
    k: tuple = (4, 8, 16)
    aggregation: str = "avg"
    reduction: int = 8


@dataclass
class LossSection:
    margin: float = 0.2
    scale: float = 30.0


@dataclass
class OptimizerSection:
    lr: float = 1e-3
    epochs: int = 30
    batch: int = 8


@dataclass
class PathsSection:
    train_list: str = ""
    features_dir: str = ""


@dataclass
class RunConfig:
    seed: int = 7
    features: FeatureSection = field(default_factory=FeatureSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    attention: AttentionSection = field(default_factory=AttentionSection)
    loss: LossSection = field(default_factory=LossSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    paths: PathsSection = field(default_factory=PathsSection)


_SECTIONS = ("features", "network", "attention", "loss", "optimizer", "paths")


def _format_value(key, value):
    if key == "network.stages":
        return ",".join(":".join(str(n) for n in stage) for stage in value)
    if key == "attention.k":
        return ",".join(str(n) for n in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key, text, target_type):
    try:
        if key == "network.stages":
            stages = []
            for part in text.split(","):
                nums = [int(n) for n in part.split(":")]
                if len(nums) != 3:
                    raise ValueError("stage needs channels:kernel:stride")
                stages.append(tuple(nums))
            return tuple(stages)
        if key == "attention.k":
            return tuple(int(n) for n in text.split(","))
        if target_type is bool:
            if text not in ("true", "false"):
                raise ValueError(f"expected true/false, got {text!r}")
            return text == "true"
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ParseError(f"bad value for {key}: {text!r} ({exc})") from exc


def serialize_config(cfg: RunConfig) -> str:
    items = {"seed": str(cfg.seed)}
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            key = f"{section}.{f.name}"
            items[key] = _format_value(key, getattr(obj, f.name))
    return "".join(f"{k} = {items[k]}\n" for k in sorted(items))


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    field_types = {
        section: {f.name: f.type for f in dataclasses.fields(getattr(cfg, section))}
        for section in _SECTIONS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError(f"line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "seed":
            cfg.seed = _parse_value(key, value, int)
            continue
        section, _, name = key.partition(".")
        if section not in _SECTIONS or name not in field_types.get(section, {}):
            raise ParseError(f"line {lineno}: unknown key {key!r}")
        tname = field_types[section][name]
        target = {"int": int, "float": float, "bool": bool, "str": str,
                  "tuple": tuple}[tname if isinstance(tname, str) else tname.__name__]
        try:
            setattr(getattr(cfg, section), name, _parse_value(key, value, target))
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    return cfg


def load_config(path, env=None) -> RunConfig:
    """Read a config file; FREQATTN_SEED in the environment overrides the seed."""
    cfg = parse_config(Path(path).read_text())
    if env is not None and "FREQATTN_SEED" in env:
        try:
            cfg.seed = int(env["FREQATTN_SEED"])
        except ValueError as exc:
            raise ConfigError(f"FREQATTN_SEED must be an integer: "
                              f"{env['FREQATTN_SEED']!r}") from exc
    return cfg


def validate_config(cfg: RunConfig, check_paths: bool = False) -> None:
    if cfg.attention.variant not in attention.VARIANTS:
        raise ConfigError(f"unknown attention variant {cfg.attention.variant!r}")
    if cfg.attention.aggregation not in attention.AGGREGATIONS:
        raise ConfigError(f"unknown aggregation {cfg.attention.aggregation!r}")
    to_network_config(cfg)   # re-checks SFSC divisibility and stage/k agreement
    if cfg.loss.margin < 0 or cfg.loss.scale <= 0:
        raise ConfigError("loss.margin must be >= 0 and loss.scale > 0")
    if cfg.optimizer.epochs < 1 or cfg.optimizer.batch < 1:
        raise ConfigError("optimizer.epochs and optimizer.batch must be >= 1")
    if check_paths:
        for name in ("train_list", "features_dir"):
            value = getattr(cfg.paths, name)
            if value and not Path(value).exists():
                raise ConfigError(f"paths.{name} does not exist: {value}")


def to_mel_config(cfg: RunConfig) -> MelConfig:
    f = cfg.features
    return MelConfig(sample_rate=f.sample_rate, n_mels=f.n_mels,
                     frame_len_ms=f.frame_len_ms, frame_shift_ms=f.frame_shift_ms,
                     n_fft=f.n_fft, fmin=f.fmin, fmax=f.fmax,
                     log_floor=f.log_floor)


def to_network_config(cfg: RunConfig) -> NetworkConfig:
    return NetworkConfig(in_channels=cfg.network.in_channels,
                         stages=cfg.network.stages,
                         embedding_dim=cfg.network.embedding_dim,
                         num_speakers=cfg.network.num_speakers,
                         attention_variant=cfg.attention.variant,
                         attention_k=cfg.attention.k,
                         aggregation=cfg.attention.aggregation,
                         reduction=cfg.attention.reduction)


def to_train_options(cfg: RunConfig) -> TrainOptions:
    return TrainOptions(lr=cfg.optimizer.lr, epochs=cfg.optimizer.epochs,
                        batch_size=cfg.optimizer.batch,
                        crop_seconds=cfg.features.crop_seconds,
                        frames_per_second=1000.0 / cfg.features.frame_shift_ms,
                        augment=cfg.features.specaug)
