"""Experiment configuration: parsing, validation, defaults and seed derivation.

A configuration is a single YAML document with nested keys. Every field has a
default, so ``seed: 7`` alone is a complete experiment. Unknown keys are
rejected at every nesting level.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Any

import yaml

__all__ = [
    "ConfigError",
    "DatasetConfig",
    "ModelConfig",
    "BuyerBiasConfig",
    "AggregatorConfig",
    "TriggerConfig",
    "AttackConfig",
    "MarketplaceConfig",
    "load_config",
    "config_from_dict",
    "dump_config",
    "apply_overrides",
    "parse_override",
    "derive_seed",
    "config_hash",
]

U64_MASK = (1 << 64) - 1

DATASET_KINDS = ("synthetic", "idx")
ARCHITECTURES = ("logreg", "mlp")
BIAS_KINDS = ("unbiased", "dirichlet")
AGGREGATORS = ("fedavg", "fltrust", "martfl", "skymask")
ATTACK_KINDS = ("none", "backdoor", "label_flip", "sybil_backdoor")
CORNERS = ("bottom-right", "bottom-left", "top-right", "top-left")
REFERENCE_UPDATES = ("aggregate", "medoid")


class ConfigError(ValueError):
    """Raised for malformed documents and constraint violations.

    ``field`` holds the dotted path of the offending key when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    # synthetic
    classes: int = 3
    dim: int = 8
    samples: int = 3000
    test_fraction: float = 0.2
    separation: float = 2.0
    # idx
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None


@dataclass(frozen=True)
class ModelConfig:
    # None picks mlp for synthetic data and logreg for idx images
    arch: str | None = None
    hidden: int = 32


@dataclass(frozen=True)
class BuyerBiasConfig:
    kind: str = "unbiased"
    alpha: float = 0.3


@dataclass(frozen=True)
class AggregatorConfig:
    kind: str = "martfl"
    mask_steps: int = 20
    mask_lr: float = 0.1
    reference_update: str = "aggregate"


@dataclass(frozen=True)
class TriggerConfig:
    patch_side: int = 10
    value: float = 1.0
    location: str = "bottom-right"
    offset_dims: int = 8


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "none"
    adversary_fraction: float = 0.0
    poison_rate: float = 0.1
    target_label: int = 0
    flip_fraction: float = 0.5
    mimicry_lambda: float = 0.5
    trigger: TriggerConfig = field(default_factory=TriggerConfig)


@dataclass(frozen=True)
class MarketplaceConfig:
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    num_sellers: int = 30
    num_rounds: int = 200
    sample_fraction: float = 0.3
    local_epochs: int = 2
    batch_size: int = 64
    local_lr: float = 0.001
    buyer_root_fraction: float = 0.02
    buyer_bias: BuyerBiasConfig = field(default_factory=BuyerBiasConfig)
    seller_noise: float = 0.3
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    milestones: tuple[float, ...] = (0.70, 0.80, 0.85)
    repeats: int = 10

    @property
    def sampled_per_round(self) -> int:
        return math.ceil(self.sample_fraction * self.num_sellers)

    @property
    def num_malicious(self) -> int:
        return math.floor(self.attack.adversary_fraction * self.num_sellers)

    @property
    def architecture(self) -> str:
        if self.model.arch is not None:
            return self.model.arch
        return "mlp" if self.dataset.kind == "synthetic" else "logreg"

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["milestones"] = list(self.milestones)
        return d

    def replace(self, **changes: Any) -> "MarketplaceConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------- parsing


def _build(cls: type, raw: Any, path: str) -> Any:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", path or None)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError("unknown key", where)
    kwargs = {}
    for name, value in raw.items():
        f = fields[name]
        sub = f"{path}.{name}" if path else name
        factory = f.default_factory
        if factory is not dataclasses.MISSING and dataclasses.is_dataclass(factory):
            kwargs[name] = _build(factory, value, sub)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v: Any) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(message, field)


def _validate(cfg: MarketplaceConfig) -> MarketplaceConfig:
    _require(_is_int(cfg.seed) and 0 <= cfg.seed <= U64_MASK, "seed", "must be an unsigned 64-bit integer")

    ds = cfg.dataset
    _require(ds.kind in DATASET_KINDS, "dataset.kind", f"must be one of {DATASET_KINDS}")
    if ds.kind == "synthetic":
        _require(_is_int(ds.classes) and ds.classes >= 2, "dataset.classes", "must be an integer >= 2")
        _require(_is_int(ds.dim) and ds.dim >= ds.classes, "dataset.dim", "must be an integer >= classes")
        _require(_is_int(ds.samples) and ds.samples >= 10 * ds.classes, "dataset.samples", "must be >= 10 * classes")
        _require(_is_real(ds.test_fraction) and 0 < ds.test_fraction < 1, "dataset.test_fraction", "must lie in (0, 1)")
        _require(_is_real(ds.separation) and ds.separation > 0, "dataset.separation", "must be positive")
    else:
        for name in ("train_images", "train_labels", "test_images", "test_labels"):
            _require(isinstance(getattr(ds, name), str), f"dataset.{name}", "path required for idx datasets")

    _require(cfg.model.arch is None or cfg.model.arch in ARCHITECTURES, "model.arch", f"must be one of {ARCHITECTURES}")
    _require(_is_int(cfg.model.hidden) and cfg.model.hidden >= 1, "model.hidden", "must be a positive integer")

    _require(_is_int(cfg.num_sellers) and cfg.num_sellers >= 1, "num_sellers", "must be a positive integer")
    _require(_is_int(cfg.num_rounds) and cfg.num_rounds >= 0, "num_rounds", "must be a nonnegative integer")
    _require(_is_real(cfg.sample_fraction) and 0 < cfg.sample_fraction <= 1, "sample_fraction", "must lie in (0, 1]")
    _require(_is_int(cfg.local_epochs) and cfg.local_epochs >= 0, "local_epochs", "must be a nonnegative integer")
    _require(_is_int(cfg.batch_size) and cfg.batch_size >= 1, "batch_size", "must be a positive integer")
    _require(_is_real(cfg.local_lr) and cfg.local_lr > 0, "local_lr", "must be positive")
    _require(
        _is_real(cfg.buyer_root_fraction) and 0 < cfg.buyer_root_fraction < 1,
        "buyer_root_fraction",
        "must lie in (0, 1)",
    )
    _require(cfg.buyer_bias.kind in BIAS_KINDS, "buyer_bias.kind", f"must be one of {BIAS_KINDS}")
    _require(_is_real(cfg.buyer_bias.alpha) and cfg.buyer_bias.alpha > 0, "buyer_bias.alpha", "must be positive")
    _require(_is_real(cfg.seller_noise) and cfg.seller_noise >= 0, "seller_noise", "must be nonnegative")

    agg = cfg.aggregator
    _require(agg.kind in AGGREGATORS, "aggregator.kind", f"must be one of {AGGREGATORS}")
    _require(_is_int(agg.mask_steps) and agg.mask_steps >= 0, "aggregator.mask_steps", "must be a nonnegative integer")
    _require(_is_real(agg.mask_lr) and agg.mask_lr > 0, "aggregator.mask_lr", "must be positive")
    _require(
        agg.reference_update in REFERENCE_UPDATES,
        "aggregator.reference_update",
        f"must be one of {REFERENCE_UPDATES}",
    )

    at = cfg.attack
    _require(at.kind in ATTACK_KINDS, "attack.kind", f"must be one of {ATTACK_KINDS}")
    _require(
        _is_real(at.adversary_fraction) and 0 <= at.adversary_fraction < 1,
        "attack.adversary_fraction",
        "must lie in [0, 1)",
    )
    for name in ("poison_rate", "flip_fraction", "mimicry_lambda"):
        v = getattr(at, name)
        _require(_is_real(v) and 0 <= v <= 1, f"attack.{name}", "must lie in [0, 1]")
    _require(_is_int(at.target_label) and at.target_label >= 0, "attack.target_label", "must be a nonnegative integer")
    if ds.kind == "synthetic":
        _require(at.target_label < ds.classes, "attack.target_label", "must be < dataset.classes")
    tr = at.trigger
    _require(_is_int(tr.patch_side) and tr.patch_side >= 0, "attack.trigger.patch_side", "must be a nonnegative integer")
    _require(_is_int(tr.offset_dims) and tr.offset_dims >= 0, "attack.trigger.offset_dims", "must be a nonnegative integer")
    _require(_is_real(tr.value), "attack.trigger.value", "must be a real number")
    _require(tr.location in CORNERS, "attack.trigger.location", f"must be one of {CORNERS}")
    if ds.kind == "synthetic":
        _require(tr.offset_dims <= ds.dim, "attack.trigger.offset_dims", "must be <= dataset.dim")
    _require(cfg.num_malicious < cfg.num_sellers, "attack.adversary_fraction", "leaves no benign seller")

    ms = cfg.milestones
    _require(isinstance(ms, (list, tuple)) and all(_is_real(m) for m in ms), "milestones", "must be a list of reals")
    _require(all(0 < m < 1 for m in ms), "milestones", "each milestone must lie in (0, 1)")
    _require(all(a < b for a, b in zip(ms, ms[1:])), "milestones", "must be strictly increasing")
    _require(_is_int(cfg.repeats) and cfg.repeats >= 1, "repeats", "must be a positive integer")
    _require(cfg.sampled_per_round >= 1, "sample_fraction", "ceil(sample_fraction * num_sellers) must be >= 1")

    return dataclasses.replace(cfg, milestones=tuple(float(m) for m in ms))


def config_from_dict(raw: Any) -> MarketplaceConfig:
    """Build and validate a config from an already-parsed mapping."""
    cfg = _build(MarketplaceConfig, raw, "")
    return _validate(cfg)


def load_config(text: str) -> MarketplaceConfig:
    """Parse a YAML document into a validated, fully defaulted config."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed document: {exc}") from exc
    return config_from_dict(raw)


def dump_config(cfg: MarketplaceConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def parse_override(item: str) -> tuple[str, Any]:
    """Split ``a.b=value``; the value is parsed as a YAML scalar or list."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, _, value = item.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    try:
        parsed = yaml.safe_load(value) if value.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {value!r}", key) from exc
    return key, parsed


def set_path(raw: dict, key: str, value: Any) -> None:
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError("cannot descend into a non-mapping", key)
        node = child
    node[parts[-1]] = value


def apply_overrides(raw: dict | None, overrides: list[tuple[str, Any]]) -> dict:
    """Return a copy of ``raw`` with dotted-path overrides applied."""
    out = copy.deepcopy(raw) if raw else {}
    for key, value in overrides:
        set_path(out, key, value)
    return out


# ---------------------------------------------------------------- seeds


def derive_seed(config_seed: int, stream_label: str, index: int) -> int:
    """Derive a 64-bit seed for one named random stream.

    BLAKE2b with an 8-byte digest over the little-endian seed, the UTF-8
    label, a NUL separator and the signed little-endian index.
    """
    payload = (
        struct.pack("<Q", config_seed & U64_MASK)
        + stream_label.encode("utf-8")
        + b"\x00"
        + struct.pack("<q", index)
    )
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def config_hash(cfg: MarketplaceConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
