"""Run configuration: flat ``section.key = value`` text files.

Defaults follow the QM9 column of the reference hyperparameter table.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .molgraph import QM9_ALPHABET, AtomAlphabet
from .nn import ACTIVATIONS, NetworkDims
from .signal import signal_layout

MAX_D = 64


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d: int = 7
    k: int = 64
    hidden: int = 256
    layers: int = 8
    activation: str = "sine"
    omega0: float = 30.0


@dataclass(frozen=True)
class DiffusionConfig:
    T: int = 100
    beta_min: float = 1e-4
    beta_max: float = 0.02


@dataclass(frozen=True)
class TrainerConfig:
    inner_iters: int = 3
    inner_lr: float = 0.1
    outer_lr: float = 1e-4
    batch_size: int = 256
    epochs: int = 500
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    alphabet: AtomAlphabet = QM9_ALPHABET
    model: ModelConfig = field(default_factory=ModelConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    train: TrainerConfig = field(default_factory=TrainerConfig)

    @property
    def f(self) -> int:
        return signal_layout(self.alphabet).f

    @property
    def dims(self) -> NetworkDims:
        m = self.model
        return NetworkDims(m.d, m.k, m.hidden, self.f, m.layers)

    def validate(self) -> "RunConfig":
        m, dcfg, t = self.model, self.diffusion, self.train
        if not 1 <= m.d <= MAX_D:
            raise ConfigError(f"model.d must lie in [1, {MAX_D}], got {m.d}")
        for name, value in (("model.k", m.k), ("model.hidden", m.hidden), ("model.layers", m.layers),
                            ("diffusion.T", dcfg.T), ("train.inner_iters", t.inner_iters),
                            ("train.batch_size", t.batch_size)):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if m.activation not in ACTIVATIONS:
            raise ConfigError(f"model.activation must be one of {ACTIVATIONS}, got {m.activation!r}")
        if m.omega0 <= 0:
            raise ConfigError("model.omega0 must be positive")
        if not 0 < dcfg.beta_min <= dcfg.beta_max < 1:
            raise ConfigError("need 0 < diffusion.beta_min <= diffusion.beta_max < 1")
        if t.inner_lr <= 0 or t.outer_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if t.epochs < 0:
            raise ConfigError("train.epochs must be >= 0")
        return self

    def to_dict(self) -> dict:
        return {
            "data.alphabet": self.alphabet.format(),
            **{f"model.{k}": v for k, v in asdict(self.model).items()},
            **{f"diffusion.{k}": v for k, v in asdict(self.diffusion).items()},
            **{f"train.{k}": v for k, v in asdict(self.train).items()},
        }

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        sections = {"model": ModelConfig, "diffusion": DiffusionConfig, "train": TrainerConfig}
        updates: dict[str, dict] = {name: {} for name in sections}
        alphabet = QM9_ALPHABET
        for key, raw in values.items():
            if key == "data.alphabet":
                alphabet = raw if isinstance(raw, AtomAlphabet) else AtomAlphabet.parse(str(raw))
                continue
            section, _, name = key.partition(".")
            kinds = {fl.name: fl.type for fl in fields(sections[section])} if section in sections else {}
            if name not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            updates[section][name] = _coerce(key, raw, kinds[name])
        return cls(
            alphabet,
            replace(ModelConfig(), **updates["model"]),
            replace(DiffusionConfig(), **updates["diffusion"]),
            replace(TrainerConfig(), **updates["train"]),
        ).validate()


def _coerce(key: str, raw, kind: str):
    try:
        if kind == "int":
            if isinstance(raw, float) or (isinstance(raw, str) and not raw.strip().lstrip("-").isdigit()):
                raise ValueError(raw)
            return int(raw)
        if kind == "float":
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def parse_config_text(text: str) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return RunConfig.from_dict(values)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(path.read_text(encoding="utf-8"))


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
