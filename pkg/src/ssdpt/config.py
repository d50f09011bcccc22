"""Run configuration: one JSON document covering every pipeline stage."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .augment import MaskSpec
from .features import FeatureConfig
from .scoring import ScoreConfig
from .segmentation import PADDED, STRICT
from .training import TrainConfig

CONFIG_SCHEMA = "ssdpt-config-1"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentConfig:
    frame_length: int = 64
    hop_train: int = 8
    hop_test: int = 1
    mode: str = STRICT


@dataclass(frozen=True)
class AugmentConfig:
    mask: MaskSpec = field(default_factory=MaskSpec)
    mixup_a: float = 0.2


@dataclass(frozen=True)
class ModelSection:
    blocks: int = 1
    heads: int = 8
    encoder_layers: int = 1
    ffn_width: int = 32


@dataclass(frozen=True)
class TrainingSection:
    alpha: float = 0.001
    learning_rate: float = 1e-4
    min_learning_rate: float = 1e-6
    lr_schedule: str = "cosine"
    weight_decay: float = 0.01
    epochs: int = 100
    batch_size: int = 64
    masked_cells_only: bool = False
    seed: int = 0
    checkpoint_every: int = 0


@dataclass(frozen=True)
class EvalSection:
    p: float = 0.1
    tie_policy: str = "half"


@dataclass(frozen=True)
class RunConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    segmentation: SegmentConfig = field(default_factory=SegmentConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    scoring: ScoreConfig = field(default_factory=ScoreConfig)
    evaluation: EvalSection = field(default_factory=EvalSection)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(
            alpha=t.alpha, learning_rate=t.learning_rate, min_learning_rate=t.min_learning_rate,
            lr_schedule=t.lr_schedule, weight_decay=t.weight_decay, epochs=t.epochs,
            batch_size=t.batch_size, mixup_a=self.augment.mixup_a, mask_spec=self.augment.mask,
            masked_cells_only=t.masked_cells_only, seed=t.seed,
        )

    def validate(self):
        """Check every stage's preconditions up front; raises ConfigError."""
        try:
            self.features.validate()
            seg = self.segmentation
            if seg.frame_length < 1 or seg.hop_train < 1 or seg.hop_test < 1:
                raise ValueError("segment frame_length and hops must be >= 1")
            if seg.mode not in (STRICT, PADDED):
                raise ValueError(f"segmentation mode must be {STRICT!r} or {PADDED!r}")
            P, F = seg.frame_length, self.features.n_mels
            m = self.model
            if m.blocks < 1 or m.encoder_layers < 1 or m.ffn_width < 1:
                raise ValueError("model blocks, encoder_layers and ffn_width must be >= 1")
            if P % m.heads or F % m.heads:
                raise ValueError(f"frame_length {P} and n_mels {F} must be divisible by heads {m.heads}")
            self.augment.mask.check(P, F)
            self.train_config().validate()
            if self.training.checkpoint_every < 0:
                raise ValueError("checkpoint_every must be >= 0")
            if self.evaluation.tie_policy not in ("strict", "half"):
                raise ValueError("tie_policy must be 'strict' or 'half'")
            if not 0 < self.evaluation.p <= 1:
                raise ValueError("evaluation p must lie in (0, 1]")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self):
        d = asdict(self)
        d["schema"] = CONFIG_SCHEMA
        return d

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


_SECTIONS = {
    "features": FeatureConfig, "segmentation": SegmentConfig, "augment": AugmentConfig,
    "model": ModelSection, "training": TrainingSection, "scoring": ScoreConfig, "evaluation": EvalSection,
}

PROFILES = {
    # settings reported for the full-scale experiments
    "defaults": {},
    # desk-scale verification run on the synthetic corpus
    "desk": {"training": {"epochs": 20}},
}


def _build_section(cls, values, name):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(unknown))}")
    values = dict(values)
    try:
        if cls is AugmentConfig and isinstance(values.get("mask"), dict):
            values["mask"] = MaskSpec.from_dict(values["mask"])
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from exc


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "mask":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def from_dict(doc: dict, profile=None) -> RunConfig:
    doc = dict(doc)
    schema = doc.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {schema!r} (expected {CONFIG_SCHEMA!r})")
    name = doc.pop("profile", profile or "defaults")
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    merged = _merge(PROFILES[name], doc)
    if "augment" in merged and isinstance(merged["augment"].get("mask"), MaskSpec):
        merged["augment"]["mask"] = merged["augment"]["mask"].to_dict()
    sections = {k: _build_section(cls, merged.get(k, {}), k) for k, cls in _SECTIONS.items()}
    return RunConfig(**sections).validate()


def load_config(path=None, profile=None) -> RunConfig:
    if path is None:
        return from_dict({}, profile)
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(doc, profile)


def override(cfg: RunConfig, section, **values) -> RunConfig:
    """Copy of ``cfg`` with some fields of one section replaced (None values ignored)."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    d = asdict(cfg)
    d[section].update(values)
    return from_dict(d, "defaults")
