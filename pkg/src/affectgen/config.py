"""INI-style configuration covering every tunable of the pipeline.

Sections map onto the dataclass configs of the owning modules; any key or
section the schema does not know is an error so typos cannot silently fall
back to defaults. Missing keys take the dataclass defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from .align import AlignConfig
from .backbone import BackboneConfig
from .conditioning import ConditioningConfig
from .corpus import CorpusSpec
from .extractor import WindowConfig
from .predictor import PredictorTrainConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class GenerateConfig:
    """Conditioned-generation job: an evenly spaced emotion grid."""

    grid_v: int = 5
    grid_a: int = 5
    per_point: int = 8
    length: int = 256
    temperature: float = 1.0
    top_k: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.grid_v < 1 or self.grid_a < 1:
            raise ValueError("grid_v and grid_a must be >= 1")
        if self.per_point < 1:
            raise ValueError(f"per_point must be >= 1, got {self.per_point}")
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")


@dataclass(frozen=True)
class CorpusConfig:
    """[corpus] section; CorpusSpec with config-file defaults."""

    n_clips: int = 2000
    seed: int = 0
    vocab_size: int = 256
    clip_len: int = 256
    emotion_sampling: str = "uniform_continuous"

    def to_spec(self) -> CorpusSpec:
        return CorpusSpec(n_clips=self.n_clips, seed=self.seed,
                          vocab_size=self.vocab_size, clip_len=self.clip_len,
                          emotion_sampling=self.emotion_sampling)


@dataclass(frozen=True)
class AppConfig:
    corpus: CorpusConfig
    window: WindowConfig
    backbone: BackboneConfig
    align: AlignConfig
    conditioning: ConditioningConfig
    train: TrainConfig
    predictor: PredictorTrainConfig
    generate: GenerateConfig
    extractor_seed: int = 42


_SECTIONS = {
    "corpus": CorpusConfig,
    "window": WindowConfig,
    "backbone": BackboneConfig,
    "align": AlignConfig,
    "conditioning": ConditioningConfig,
    "train": TrainConfig,
    "predictor": PredictorTrainConfig,
    "generate": GenerateConfig,
}

_EXTRACTOR_SECTION = "extractor"
_EXTRACTOR_KEYS = {"seed": int}


def _parse_value(raw: str, target_type: type, where: str):
    raw = raw.strip()
    try:
        if target_type is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ValueError(f"bad value for {where}: {exc}") from exc


def _build_section(cls, parser: configparser.ConfigParser, section: str):
    known = {f.name: str(f.type) for f in fields(cls)}
    values = {}
    if parser.has_section(section):
        for key, raw in parser.items(section):
            if key not in known:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            annotation = known[key]
            if "bool" in annotation:
                target = bool
            elif "int" in annotation:
                target = int
            elif "float" in annotation:
                target = float
            else:
                target = str
            values[key] = _parse_value(raw, target, f"[{section}] {key}")
    return cls(**values)


def load_config(path: Path | None = None) -> AppConfig:
    """Parse a config file into an AppConfig; None gives pure defaults."""
    parser = configparser.ConfigParser()
    extractor_seed = 42
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        with path.open("r", encoding="utf-8") as fh:
            parser.read_file(fh)
        for section in parser.sections():
            if section == _EXTRACTOR_SECTION:
                for key, raw in parser.items(section):
                    if key not in _EXTRACTOR_KEYS:
                        raise ValueError(f"unknown key {key!r} in section "
                                         f"[{_EXTRACTOR_SECTION}]")
                    extractor_seed = _parse_value(raw, _EXTRACTOR_KEYS[key],
                                                  f"[{section}] {key}")
                continue
            if section not in _SECTIONS:
                raise ValueError(f"unknown config section [{section}]")

    parts = {name: _build_section(cls, parser, name)
             for name, cls in _SECTIONS.items()}
    return AppConfig(extractor_seed=extractor_seed, **parts)


def reference_config() -> str:
    """A config file listing every key at its default value."""
    lines = []
    for section, cls in _SECTIONS.items():
        lines.append(f"[{section}]")
        instance = cls()
        for f in fields(cls):
            lines.append(f"{f.name} = {getattr(instance, f.name)}")
        lines.append("")
    lines.append(f"[{_EXTRACTOR_SECTION}]")
    lines.append("seed = 42")
    lines.append("")
    return "\n".join(lines)
