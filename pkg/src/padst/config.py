"""Flat experiment configuration: ``key = value`` files merged with flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .model import PRESETS, VARIANTS, ModelConfig
from .noising import ZERO_NOISE, NoiseSpec, parse_noise_spec
from .training import TrainConfig

# variants trained with polarity-aware noise; the others use none
NOISED_VARIANTS = ("denoised",)
DEFAULT_NOISE = "WG03P08-AG03P08-M"
STAGES = ("data", "init", "pretrain", "finetune", "transfer")


class ConfigError(ValueError):
    pass


def _key(default, help: str, choices: tuple[str, ...] | None = None):
    return field(default=default, metadata={"help": help, "choices": choices})


@dataclass
class ExperimentConfig:
    seed: int = _key(0, "root seed; every stage derives its own seed from it")
    out_dir: str = _key("run", "directory receiving all run artifacts")
    variant: str = _key("denoised", "model variant", VARIANTS)
    noise: str = _key("auto", f"noise-spec name; 'auto' means {DEFAULT_NOISE} for denoised, none otherwise")
    lexicon: str = _key("", "polarity lexicon TSV (empty: bundled English lexicon)")
    pivot_min_abs_score: float = _key(0.0, "ignore lexicon entries with a smaller |score|")
    translator: str = _key("cipher", "forward translator", ("cipher", "learned"))
    dict: str = _key("", "bilingual dictionary TSV for the cipher translator")
    mt_checkpoint: str = _key("", "translation model checkpoint for the learned translator")
    general_corpus: str = _key("", "pretraining corpus (empty: synthetic)")
    train_corpus: str = _key("", "labelled corpus (empty: synthetic)")
    test_corpus: str = _key("", "held-out corpus (empty: split off the labelled corpus)")
    synthetic_size: int = _key(1000, "synthetic sentences per sentiment")
    general_size: int = _key(1000, "synthetic pretraining sentences per sentiment")
    valid_size: int = _key(0, "validation sentences per sentiment")
    test_size: int = _key(100, "test sentences per sentiment")
    min_len: int = _key(5, "dataset filter: minimum tokens")
    rep_limit: int = _key(3, "dataset filter: longest allowed run of one token")
    polarity_threshold: float = _key(0.5, "dataset filter: minimum |classifier score|")
    model_preset: str = _key("desk", "model size preset", tuple(PRESETS))
    layers: int = _key(0, "layers per stack (0: preset)")
    heads: int = _key(0, "attention heads (0: preset)")
    d_model: int = _key(0, "model width (0: preset)")
    d_ff: int = _key(0, "feed-forward width (0: preset)")
    max_len: int = _key(0, "maximum sequence length (0: preset)")
    dropout: float = _key(0.1, "dropout rate")
    lr: float = _key(3e-4, "learning rate")
    beta1: float = _key(0.9, "Adam beta1")
    beta2: float = _key(0.98, "Adam beta2")
    eps: float = _key(1e-9, "Adam epsilon")
    batch_size: int = _key(32, "sentences per batch")
    warmup: int = _key(0, "linear warmup steps")
    clip_norm: float = _key(1.0, "global gradient-norm clip (0 disables)")
    pretrain_steps: int = _key(1000, "encoder pretraining steps")
    finetune_steps: int = _key(1500, "finetuning steps")
    noise_at_inference: bool = _key(False, "also noise inputs at transfer time")

    def __post_init__(self):
        for f in fields(self):
            choices = f.metadata.get("choices")
            if choices and getattr(self, f.name) not in choices:
                raise ConfigError(f"{f.name}={getattr(self, f.name)!r}; choose from {', '.join(choices)}")
        if self.translator == "learned" and not self.mt_checkpoint:
            raise ConfigError("translator=learned needs mt_checkpoint")
        for name in ("synthetic_size", "general_size", "valid_size", "test_size", "batch_size",
                     "pretrain_steps", "finetune_steps", "warmup", "min_len", "rep_limit"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.batch_size == 0:
            raise ConfigError("batch_size must be positive")
        self.noise_spec()

    # resolution ----------------------------------------------------------
    def noise_spec(self) -> NoiseSpec:
        if self.noise == "auto":
            return parse_noise_spec(DEFAULT_NOISE) if self.variant in NOISED_VARIANTS else ZERO_NOISE
        try:
            spec = parse_noise_spec(self.noise)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not spec.is_zero and self.variant not in NOISED_VARIANTS:
            raise ConfigError(f"variant {self.variant} trains without noise; use --variant denoised for {self.noise}")
        return spec

    def model_config(self) -> ModelConfig:
        sizes = {k: getattr(self, k) for k in ("layers", "heads", "d_model", "d_ff", "max_len") if getattr(self, k)}
        try:
            return ModelConfig.preset(self.model_preset, variant=self.variant, dropout=self.dropout, **sizes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.lr, self.beta1, self.beta2, self.eps, self.batch_size, self.warmup, self.clip_norm)

    def stage_seed(self, stage: str) -> int:
        """Independent, reproducible seed for one pipeline stage."""
        child = np.random.SeedSequence(self.seed).spawn(len(STAGES))[STAGES.index(stage)]
        return int(child.generate_state(1)[0])

    def resolved(self) -> dict[str, object]:
        out = dataclasses.asdict(self)
        out["noise"] = self.noise_spec().name
        out.update({k: v for k, v in self.model_config().to_dict().items() if k in out})
        return out

    def write(self, path: str | Path) -> None:
        lines = [f"# padst {__version__}", f"version = {__version__}"]
        lines += [f"{k} = {_format(v)}" for k, v in self.resolved().items()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    # construction --------------------------------------------------------
    @classmethod
    def from_mapping(cls, values: dict[str, object]) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key == "version":
                continue
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, types[key])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path, overrides: dict[str, object] | None = None) -> "ExperimentConfig":
        return cls.from_mapping({**read_config_file(path), **(overrides or {})})


def read_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip()
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
    return values


def config_fields() -> list[dataclasses.Field]:
    return list(fields(ExperimentConfig))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(key: str, raw, typ: str):
    if not isinstance(raw, str):
        return raw
    try:
        if typ == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ}") from None
    return raw
