"""Campaign configuration and deterministic seed derivation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields

from .coverage import FULL_MAP_SIZE, ConfigError, is_power_of_two

PROFILES = ("desk", "paper")
FULL_SCALE_PROFILE = {"map_size": FULL_MAP_SIZE, "deconv_blocks": 42, "batch_norm": True}


@dataclass(frozen=True)
class CampaignConfig:
    target: str = "json"
    map_size: int = 1024
    latent_dim: int = 16
    str_len_max: int = 512
    dict_size: int = 129
    batch_size: int = 64
    train_batch_size: int = 16
    steps_per_pass: int = 100
    k: int = 5000
    learning_rate: float = 0.0001
    input_noise_sigma: float = 0.1
    mse_weight: float = 1.0
    mse_exponent: float = 2.0
    deconv_blocks: int = 10
    filters: int = 32
    base_len: int = 16
    vae_hidden: tuple = (512, 128)
    leaky_slope: float = 0.2
    batch_norm: bool = False
    residual: bool = True
    rank_space: str = "latent"
    epochs: int = 100
    seed: int = 0
    output: str = ""
    profile: str = "desk"
    max_input_len: int = 512
    checkpoint_every: int = 10

    def __post_init__(self):
        validate(self)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["vae_hidden"] = list(self.vae_hidden)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# fields that may be zero (everything else numeric must be positive)
_NONNEGATIVE = {"seed", "steps_per_pass", "epochs", "input_noise_sigma", "mse_weight", "checkpoint_every"}


def validate(cfg):
    from .targets import target_ids

    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            continue
        if f.name in _NONNEGATIVE:
            if value < 0:
                raise ConfigError(f"{f.name} must be nonnegative (got {value})")
        elif value <= 0:
            raise ConfigError(f"{f.name} must be positive (got {value})")
    if not is_power_of_two(cfg.map_size):
        raise ConfigError(f"map_size must be a power of two (got {cfg.map_size})")
    if cfg.str_len_max != 512:
        raise ConfigError(f"str_len_max is fixed at 512 (got {cfg.str_len_max})")
    if cfg.dict_size != 129:
        raise ConfigError(f"dict_size is fixed at 129 (got {cfg.dict_size})")
    if cfg.k < 2:
        raise ConfigError(f"k must be at least 2 (got {cfg.k})")
    if cfg.profile not in PROFILES:
        raise ConfigError(f"profile must be one of {PROFILES} (got {cfg.profile!r})")
    if cfg.target not in target_ids():
        raise ConfigError(f"target must be one of {target_ids()} (got {cfg.target!r})")
    if cfg.rank_space not in ("latent", "trace"):
        raise ConfigError(f"rank_space must be 'latent' or 'trace' (got {cfg.rank_space!r})")
    if cfg.max_input_len > cfg.str_len_max:
        raise ConfigError("max_input_len cannot exceed str_len_max")
    if not all(isinstance(h, int) and h > 0 for h in cfg.vae_hidden):
        raise ConfigError(f"vae_hidden must be positive integers (got {cfg.vae_hidden})")


def _coerce(name, raw, default):
    """Turn a JSON value or command-line string into the field's type."""
    if isinstance(default, bool):
        if isinstance(raw, str):
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"{name} must be a boolean (got {raw!r})")
            return lowered in ("true", "1", "yes")
        return bool(raw)
    if isinstance(default, tuple):
        if isinstance(raw, str):
            raw = [p for p in raw.replace(" ", "").split(",") if p]
        return tuple(int(v) for v in raw)
    try:
        if isinstance(default, int):
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a {type(default).__name__} (got {raw!r})") from None
    return str(raw)


def parse_config(document=None, overrides=None):
    """Build a config from JSON text (or None) and override pairs.

    ``overrides`` is a mapping or an iterable of ``(key, value)`` pairs;
    overrides win over the document, and ``profile: paper`` fills in the
    full-scale defaults for any field not set explicitly.
    """
    data = {}
    if document is not None and document.strip():
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
    data = dict(data)
    pairs = overrides.items() if isinstance(overrides, dict) else (overrides or [])
    for key, value in pairs:
        data[key.replace("-", "_")] = value
    known = {f.name: f for f in fields(CampaignConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    defaults = CampaignConfig()
    values = {k: _coerce(k, v, getattr(defaults, k)) for k, v in data.items()}
    if values.get("profile", "desk") == "paper":
        for k, v in FULL_SCALE_PROFILE.items():
            values.setdefault(k, v)
    return CampaignConfig(**values)


def derive_seed(seed, label):
    """64-bit component seed from the campaign seed and a component name."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
