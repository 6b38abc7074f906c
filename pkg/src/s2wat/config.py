"""Flat ``key = value`` run configuration with presets and overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .attention import BlockOptions
from .encoder import EncoderConfig
from .errors import ConfigurationError, FormatError
from .losses import LossWeights
from .model import ModelConfig
from .transfer import DecoderConfig, TransferConfig

SEED_ENV = "S2WAT_SEED"


@dataclass
class RunConfig:
    """Every knob of a run.  Tuples are written comma-separated in files."""

    embed_dim: int = 96
    blocks: tuple = (2, 2, 2)
    strip_widths: tuple = (4, 4, 4)
    heads: tuple = (3, 6, 12)
    attention: str = "spw"
    fusion: str = "attn_merge"
    branches: tuple = ("horizontal", "vertical", "square")
    attn_merge_softmax: bool = False
    mlp_ratio: int = 4
    transfer_depth: int = 3
    transfer_heads: int = 8
    decoder_convs_per_scale: int = 2
    lambda_content: float = 2.0
    lambda_style: float = 3.0
    lambda_id1: float = 50.0
    lambda_id2: float = 1.0
    lr: float = 1e-4
    warmup: int = 1000
    iters: int = 40000
    batch_size: int = 4
    crop_size: int = 224
    resize: int = 512
    content_dir: str = ""
    style_dir: str = ""
    out_dir: str = "runs/s2wat"
    seed: int = 0
    extractor: str = "surrogate"
    extractor_seed: int = 0
    checkpoint_every: int = 1000
    dtype: str = "float32"

    def model_config(self) -> ModelConfig:
        block = BlockOptions(attention=self.attention, fusion=self.fusion, branches=self.branches,
                             attn_merge_softmax=self.attn_merge_softmax, mlp_ratio=self.mlp_ratio)
        return ModelConfig(
            encoder=EncoderConfig(self.embed_dim, self.blocks, self.strip_widths, self.heads, block),
            transfer=TransferConfig(self.transfer_depth, self.transfer_heads, self.mlp_ratio),
            decoder=DecoderConfig(self.decoder_convs_per_scale),
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_content, self.lambda_style, self.lambda_id1, self.lambda_id2)

    @property
    def np_dtype(self):
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype!r}")
        return np.dtype(self.dtype)

    def validate(self) -> "RunConfig":
        self.model_config()
        self.loss_weights()
        _ = self.np_dtype
        for key in ("iters", "batch_size", "crop_size", "checkpoint_every"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"{key} must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.warmup < 0:
            raise ConfigurationError("warmup must be >= 0")
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: Mapping[str, str]) -> "RunConfig":
        return dataclasses.replace(self, **{k: _coerce(self, k, v) for k, v in overrides.items()})


PRESETS = {
    "full": {},
    "desk": dict(embed_dim=16, blocks=(2, 2, 2), strip_widths=(2, 2, 2), heads=(2, 2, 2),
                 transfer_depth=2, transfer_heads=2, lr=1e-3, warmup=5, iters=50, batch_size=2,
                 crop_size=32, resize=0, checkpoint_every=25, out_dir="runs/desk"),
}


def _field_types() -> dict:
    defaults = RunConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(RunConfig)}


def _coerce(cfg: RunConfig, key: str, raw):
    types = _field_types()
    if key not in types:
        raise ConfigurationError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return tuple(raw) if types[key] is tuple else raw
    kind = types[key]
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return lowered in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            items = [t.strip() for t in text.split(",") if t.strip()]
            sample = getattr(cfg, key)
            if sample and isinstance(sample[0], int):
                return tuple(int(t) for t in items)
            return tuple(items)
        return text
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc


def parse_config_text(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "preset":
            cfg = preset(value)
            continue
        overrides[key] = value
    return cfg.with_overrides(overrides)


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return RunConfig(**PRESETS[name])


def load_config(path=None, preset_name: str = "full", overrides: Optional[Mapping[str, str]] = None,
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Preset, then file, then ``--key value`` overrides, then ``S2WAT_SEED``."""
    cfg = preset(preset_name)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from exc
        cfg = parse_config_text(text, cfg)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    environ = os.environ if environ is None else environ
    if environ.get(SEED_ENV):
        cfg = cfg.with_overrides({"seed": environ[SEED_ENV]})
    return cfg.validate()
