"""Flat key-value run configuration.

Grammar: one `key = value` pair per line; `#` starts a comment; keys are
dotted lowercase identifiers. Values are int, float, bool (true/false), or
strings (comma lists where noted). The serialized effective config is
hashed into every run manifest.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

from .temporal import FEATURE_NAMES, InputError


class ConfigError(InputError):
    """Configuration text or values failed validation."""


@dataclass
class Config:
    # data / protocol
    window: int = 60
    batch: int = 32
    steps: int = 2000
    stride: int = 1
    split_train: float = 0.7
    split_val: float = 0.15
    split_test: float = 0.15
    seed: int = 0
    eval_every: int = 50
    early_stop_patience: int = 0      # 0 disables early stopping
    # optimizer
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    # semantic index
    emb_dim: int = 768
    emb_seed: int = 0
    # temporal encoder
    kan_degree: int = 3
    kan_basis_count: int = 8
    kan_activation: str = "tanh"
    kan_feature_set: str = ",".join(FEATURE_NAMES)
    # backbone
    ssm_state_size: int = 64
    ssm_channels: int = 16
    ssm_layers: int = 1
    ssm_e_scale: float = 1.0
    ssm_k_scale: float = 1.0
    # ablations
    semantic_off: bool = False
    kan_off: bool = False
    context_off: bool = False

    def validate(self):
        if self.window < 2:
            raise ConfigError("window must be >= 2")
        if self.steps < 1 or self.batch < 1:
            raise ConfigError("steps and batch must be >= 1")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        for name in ("lr", "adam_beta1", "adam_beta2", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        feats = self.feature_indices()
        if not feats:
            raise ConfigError("kan_feature_set must name at least one feature")
        if self.kan_activation not in ("tanh", "identity"):
            raise ConfigError(f"unknown kan_activation {self.kan_activation!r}")

    def feature_indices(self):
        names = [n.strip() for n in self.kan_feature_set.split(",") if n.strip()]
        idx = []
        for n in names:
            if n not in FEATURE_NAMES:
                raise ConfigError(f"unknown calendar feature {n!r}")
            idx.append(FEATURE_NAMES.index(n))
        return idx


# serialized key <-> dataclass field
_KEYMAP = {
    "window": "window", "batch": "batch", "steps": "steps", "stride": "stride",
    "split.train": "split_train", "split.val": "split_val",
    "split.test": "split_test", "seed": "seed", "eval_every": "eval_every",
    "early_stop.patience": "early_stop_patience",
    "lr": "lr", "adam.beta1": "adam_beta1", "adam.beta2": "adam_beta2",
    "adam.eps": "adam_eps", "clip_norm": "clip_norm",
    "emb.dim": "emb_dim", "emb.seed": "emb_seed",
    "kan.degree": "kan_degree", "kan.basis_count": "kan_basis_count",
    "kan.activation": "kan_activation", "kan.feature_set": "kan_feature_set",
    "ssm.state_size": "ssm_state_size", "ssm.channels": "ssm_channels",
    "ssm.layers": "ssm_layers", "ssm.e_scale": "ssm_e_scale",
    "ssm.k_scale": "ssm_k_scale",
    "ablate.semantic_off": "semantic_off", "ablate.kan_off": "kan_off",
    "ablate.context_off": "context_off",
}
_FIELDMAP = {v: k for k, v in _KEYMAP.items()}


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: Config) -> str:
    lines = []
    for f in fields(Config):
        lines.append(f"{_FIELDMAP[f.name]} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: Config) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()[:16]


def _parse_value(field_type, raw: str, key: str):
    raw = raw.strip()
    if field_type is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key}: expected bool, got {raw!r}")
    if field_type is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {key}: expected int, got {raw!r}")
    if field_type is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {key}: expected float, got {raw!r}")
    return raw


def parse_config(text: str, base: Config | None = None) -> Config:
    cfg = Config(**vars(base)) if base is not None else Config()
    types = {f.name: f.type for f in fields(Config)}
    concrete = {"int": int, "float": float, "bool": bool, "str": str}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _KEYMAP:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        fname = _KEYMAP[key]
        ftype = types[fname]
        if isinstance(ftype, str):
            ftype = concrete[ftype]
        setattr(cfg, fname, _parse_value(ftype, raw, key))
    cfg.validate()
    return cfg


def load_config(path, base: Config | None = None) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base=base)


def apply_overrides(cfg: Config, pairs) -> Config:
    """Apply `key=value` strings (CLI overrides) on top of a config."""
    text = "\n".join(p.replace("=", " = ", 1) for p in pairs)
    return parse_config(text, base=cfg)
