"""Configuration records and the flat ``section.key = value`` file format."""
from __future__ import annotations

import json
import math
import typing
from dataclasses import dataclass, field, fields
from typing import Any

from .errors import ConfigError
from .planted import PlantedConfig


@dataclass
class LossWeights:
    lambda_s: float = 1.0
    lambda_d: float = 1.0
    lambda_m: float = 1.0
    lambda_ys: float = 5.0
    lambda_yd: float = 1.0
    lambda_ym: float = 2.0
    lambda_kl: float = 1e-4

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"loss.{f.name} must be finite and non-negative, got {v}")


@dataclass
class ModelConfig:
    hidden_dim: int = 256
    latent_dim: int = 256
    encoder_layers: int = 2
    attention_heads: int = 4
    ffn_multiplier: int = 4
    decoder_layers: int = 2
    max_visits: int = 32
    max_report_len: int = 32
    share_history_attention: bool = False
    use_initial_history: bool = True
    # ablation switches
    use_state: bool = True
    multi_visit: bool = True
    deliberation: bool = True

    def validate(self) -> None:
        for name in ("hidden_dim", "latent_dim", "encoder_layers", "attention_heads",
                     "ffn_multiplier", "decoder_layers", "max_visits", "max_report_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be positive")
        if self.hidden_dim % self.attention_heads:
            raise ConfigError("model.hidden_dim must be divisible by model.attention_heads")


@dataclass
class TrainConfig:
    epochs: int = 20
    event_only_epochs: int = 5
    lr: float = 1e-5
    batch_size: int = 16
    seed: int = 0
    warmup_fraction: float = 0.1
    grad_clip: float = 5.0
    # joint epochs after which the paragraph encoder stops updating; negative = never
    freeze_encoder_after: int = 1
    deterministic: bool = True

    def validate(self) -> None:
        if self.epochs < 0 or self.event_only_epochs < 0:
            raise ConfigError("train.epochs and train.event_only_epochs must be non-negative")
        if self.event_only_epochs > self.epochs:
            raise ConfigError("train.event_only_epochs cannot exceed train.epochs")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ConfigError("train.lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("train.warmup_fraction must be in [0, 1)")


@dataclass
class SynthConfig:
    strategy: str = "bernoulli"
    threshold: float = 0.5
    top_k: int = 5
    bootstrap: str = "empirical"
    decode: str = "greedy"
    temperature: float = 1.0
    with_reports: bool = False
    steps: int = 1
    n_records: int = 0

    def validate(self) -> None:
        if self.strategy not in ("bernoulli", "threshold", "top_k"):
            raise ConfigError(f"synth.strategy must be bernoulli, threshold or top_k, got {self.strategy!r}")
        if self.bootstrap not in ("empirical", "given_first_visit"):
            raise ConfigError(f"synth.bootstrap must be empirical or given_first_visit")
        if self.decode not in ("greedy", "sample"):
            raise ConfigError("synth.decode must be greedy or sample")
        if self.steps < 1:
            raise ConfigError("synth.steps must be at least 1")
        if self.temperature <= 0:
            raise ConfigError("synth.temperature must be positive")


@dataclass
class AttackConfig:
    common_fraction: float = 0.2
    calibration_fraction: float = 0.2
    threshold: float | None = None
    sample_size: int = 500

    def validate(self) -> None:
        if not 0 < self.common_fraction < 1:
            raise ConfigError("attack.common_fraction must be in (0, 1)")
        if not 0 < self.calibration_fraction < 1:
            raise ConfigError("attack.calibration_fraction must be in (0, 1)")


@dataclass
class EvalConfig:
    bleu_max_n: int = 2
    utility_epochs: int = 300
    utility_lr: float = 0.05


@dataclass
class Settings:
    """Every tunable value, grouped by the section prefix used in config files."""

    data: PlantedConfig = field(default_factory=PlantedConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    synth: SynthConfig = field(default_factory=SynthConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> "Settings":
        for f in fields(self):
            section = getattr(self, f.name)
            if hasattr(section, "validate"):
                section.validate()
        return self

    def dumps(self) -> str:
        return dump_settings(self)


# Small-dimension profile for single-core runs. The learning rate is raised
# because the default value barely moves a freshly initialized 64-d model in a
# few hundred steps.
DESK_PROFILE = {
    "model.hidden_dim": "64",
    "model.latent_dim": "64",
    "train.lr": "1e-3",
}


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return json.dumps(value)
    return str(value)


def _coerce(raw: str, annotation, key: str):
    raw = raw.strip()
    hint = annotation if not isinstance(annotation, str) else eval(annotation, vars(typing), {})  # noqa: S307
    args = typing.get_args(hint)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    if optional and raw.lower() in ("none", "null", ""):
        return None
    origin = typing.get_origin(base)
    try:
        if base is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if base is int:
            return int(raw)
        if base is float:
            return float(raw)
        if base is str:
            return raw
        if origin in (list, tuple):
            return json.loads(raw)
    except (ValueError, json.JSONDecodeError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(base, '__name__', base)}") from None
    raise ConfigError(f"{key}: unsupported value type {base}")


def apply_overrides(settings: Settings, items: dict[str, str]) -> Settings:
    for key, raw in items.items():
        section_name, _, name = key.partition(".")
        if not name or not hasattr(settings, section_name):
            raise ConfigError(f"unknown config key {key!r}")
        section = getattr(settings, section_name)
        hints = {f.name: f.type for f in fields(section)}
        if name not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(section, name, _coerce(raw, hints[name], key))
    return settings


def parse_settings(text: str, base: Settings | None = None) -> Settings:
    """Read ``section.key = value`` lines; ``#`` starts a comment."""
    items = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        items[key.strip()] = value.strip()
    return apply_overrides(base or Settings(), items)


def load_settings(path: str | None = None, desk_scale: bool = False) -> Settings:
    settings = Settings()
    if desk_scale:
        apply_overrides(settings, DESK_PROFILE)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        parse_settings(text, settings)
    return settings.validate()


def dump_settings(settings: Settings) -> str:
    lines = []
    for sf in fields(settings):
        section = getattr(settings, sf.name)
        for f in fields(section):
            value = getattr(section, f.name)
            if value is None and sf.name == "data":
                continue  # unset rule-table overrides
            lines.append(f"{sf.name}.{f.name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def settings_to_flat(settings: Settings) -> dict[str, str]:
    out = {}
    for line in dump_settings(settings).splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out
