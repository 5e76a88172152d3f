"""Training configuration, JSON round-trip and command-line overrides.

Precedence is defaults < JSON file < ``key=value`` overrides. Unknown keys
are rejected with the offending key named.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .bsn import BSNConfig
from .imagestore import NoiseSpec
from .losses import LossSpec

MODES = ("standard", "self_on_test")


class ConfigError(ValueError):
    pass


@dataclass
class PhaseConfig:
    lr: float | None = 1e-4
    batch: int = 16
    patch: int = 160
    epochs: int = 15
    patches_per_epoch: int = 25600

    @property
    def steps_per_epoch(self) -> int:
        return -(-self.patches_per_epoch // self.batch)


def _phase2_default():
    # lr None: derived from phase 1 (divided by TrainConfig.lr_decay)
    return PhaseConfig(lr=None, batch=8, patch=250, epochs=10, patches_per_epoch=25600)


@dataclass
class TrainConfig:
    loss: LossSpec = field(default_factory=LossSpec)
    bsn: BSNConfig = field(default_factory=BSNConfig)
    phase1: PhaseConfig = field(default_factory=PhaseConfig)
    phase2: PhaseConfig = field(default_factory=_phase2_default)
    lr_decay: float = 10.0
    reset_optimizer: bool = False
    master_seed: int = 0
    dataset: str | None = None
    val_noisy: str | None = None
    val_clean: str | None = None
    mode: str = "standard"
    noise: NoiseSpec | None = None
    eval_stride: int = 2
    deterministic: bool = True
    out_dir: str | None = None

    def __post_init__(self):
        self.validate()

    @property
    def stride_train(self) -> int:
        return self.loss.stride

    def phase_lr(self, index: int) -> float:
        if index == 0:
            return self.phase1.lr
        return self.phase2.lr if self.phase2.lr is not None else self.phase1.lr / self.lr_decay

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.phase1.lr is None or self.phase1.lr <= 0:
            raise ConfigError("phase1.lr must be > 0")
        if self.phase2.lr is not None and self.phase2.lr <= 0:
            raise ConfigError("phase2.lr must be > 0")
        if self.lr_decay <= 0:
            raise ConfigError("lr_decay must be > 0")
        if self.phase1.epochs < 1 or self.phase2.epochs < 0:
            raise ConfigError("phase1.epochs must be >= 1 and phase2.epochs >= 0")
        for name, ph in (("phase1", self.phase1), ("phase2", self.phase2)):
            if ph.batch < 1 or ph.patch < 1 or ph.patches_per_epoch < 1:
                raise ConfigError(f"{name}: batch, patch and patches_per_epoch must be positive")
            if ph.patch % self.stride_train:
                raise ConfigError(f"{name}.patch={ph.patch} is not divisible by the training stride {self.stride_train}")
        if self.eval_stride < 1:
            raise ConfigError("eval_stride must be >= 1")

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        """Small preset for one-CPU experiments: tiny network, short schedule."""
        base = dict(
            loss=LossSpec("csdbsn", stride=5, sampler="rsg"),
            bsn=BSNConfig.tiny(in_channels=1),
            phase1=PhaseConfig(lr=1e-3, batch=8, patch=40, epochs=10, patches_per_epoch=800),
            phase2=PhaseConfig(lr=None, batch=8, patch=40, epochs=0, patches_per_epoch=800),
        )
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return to_dict(self)


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [to_dict(v) for v in obj]
    return obj


def _dataclass_of(tp):
    """Return the dataclass inside ``tp`` (handles ``X | None``), else None."""
    if dataclasses.is_dataclass(tp):
        return tp
    for arg in typing.get_args(tp):
        if dataclasses.is_dataclass(arg):
            return arg
    return None


def from_dict(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key: {prefix}{key}")
        sub = _dataclass_of(hints[key])
        if sub is not None and value is not None:
            value = from_dict(sub, value, f"{prefix}{key}.")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``a.b=value`` strings to a nested dict (values parsed as JSON when possible)."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            if node.get(p) is None:
                node[p] = {}
            node = node[p]
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {key}: {p} is not an object")
        node[parts[-1]] = _parse_value(raw)
    return data


def load_config(path=None, overrides=(), cls=TrainConfig, base: dict | None = None):
    """Resolve defaults, then an optional JSON file, then overrides."""
    data = to_dict(cls()) if base is None else dict(base)
    if path is not None:
        with open(path) as fh:
            file_data = json.load(fh)
        data = _merge(data, file_data)
    data = apply_overrides(data, overrides)
    return from_dict(cls, data)


def _merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def write_snapshot(config, directory, name: str = "resolved_config.json") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text(json.dumps(to_dict(config), indent=2, sort_keys=True))
    return path
