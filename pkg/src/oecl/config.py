"""Experiment configuration and its flat ``key = value`` file format.

Keys are ExperimentConfig field names, nested sections dotted::

    # unimodal benchmark with near outliers
    epochs = 200
    loss.tau = 0.5
    encoder.hidden_widths = 64,64
    data.augment = gaussian-noise(0.3); random-scale(0.8,1.2)

Unknown keys are an error.  ``none`` clears an optional value.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .data import BenchmarkSpec, format_transforms, parse_transforms, validate_shift_set
from .encoder import EncoderConfig
from .errors import ConfigError
from .losses import COSINE, LossConfig

OE_KINDS = ("none", "near", "far", "shift")

DEFAULT_AUGMENT = "gaussian-noise(0.3); random-scale(0.9,1.1)"


def _default_data() -> BenchmarkSpec:
    return BenchmarkSpec(augment=DEFAULT_AUGMENT, shifts="planar-rotation(180); planar-rotation(270)")


@dataclass(frozen=True)
class ExperimentConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    data: BenchmarkSpec = field(default_factory=_default_data)
    oe_kind: str = "near"
    oe_subset_k: int | None = None
    epochs: int = 200
    warmup_epochs: int = 20
    batch_size: int = 128
    lr0: float = 0.1
    momentum: float = 0.9
    eval_every: int = 10
    n_aug_score: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.oe_kind not in OE_KINDS:
            raise ConfigError(f"oe_kind must be one of {OE_KINDS}, got {self.oe_kind!r}")
        if self.epochs < 1 or not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigError("need epochs >= 1 and 0 <= warmup_epochs <= epochs")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.n_aug_score < 2:
            raise ConfigError("n_aug_score must be at least 2 (norm statistics need two views)")
        if self.oe_subset_k is not None and self.oe_subset_k < 0:
            raise ConfigError("oe_subset_k must be non-negative")
        if self.encoder.input_dim != self.data.input_dim:
            raise ConfigError(f"encoder.input_dim {self.encoder.input_dim} != data.input_dim {self.data.input_dim}")
        if self.loss.form == COSINE and not self.encoder.normalize_output:
            raise ConfigError("the cosine-softmax form needs encoder.normalize_output = true")
        if self.oe_kind == "shift":
            validate_shift_set(self.data.shifts)

    def replace(self, **changes) -> ExperimentConfig:
        """Copy with changes; dotted keys such as ``loss.alpha`` reach into sections."""
        top, nested = {}, {}
        for key, value in changes.items():
            key = key.replace("__", ".")
            if "." in key:
                section, name = key.split(".", 1)
                nested.setdefault(section, {})[name] = value
            else:
                top[key] = value
        for section, vals in nested.items():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section {section!r}")
            top[section] = dataclasses.replace(top.get(section, getattr(self, section)), **vals)
        return dataclasses.replace(self, **top)


_SECTIONS = {"encoder": EncoderConfig, "loss": LossConfig, "data": BenchmarkSpec}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _optional(conv):
    def parse(text):
        return None if text.lower() in ("none", "") else conv(text)

    return parse


# field name -> parser, for fields whose default type cannot be inferred
_SPECIAL = {
    "encoder.hidden_widths": _parse_ints,
    "loss.uniform_weight": _optional(float),
    "data.augment": parse_transforms,
    "data.augment_oe": _optional(parse_transforms),
    "data.shifts": parse_transforms,
    "oe_subset_k": _optional(int),
}


def _parser_for(key: str, default):
    if key in _SPECIAL:
        return _SPECIAL[key]
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
            cls = _SECTIONS.get(section)
            names = {f.name for f in dataclasses.fields(cls)} if cls else set()
            if name not in names:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            default = getattr(getattr(base, section), name)
        else:
            if key not in {f.name for f in dataclasses.fields(ExperimentConfig)} or key in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            default = getattr(base, key)
        if key in changes:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            changes[key] = _parser_for(key, default)(value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    try:
        return base.replace(**changes)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and not isinstance(v[0], int):
            return format_transforms(v)
        return ",".join(str(i) for i in v)
    return str(v)


def config_to_text(config: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        if f.name in _SECTIONS:
            for g in dataclasses.fields(v):
                lines.append(f"{f.name}.{g.name} = {_format_value(getattr(v, g.name))}")
        else:
            lines.append(f"{f.name} = {_format_value(v)}")
    return "\n".join(lines) + "\n"
