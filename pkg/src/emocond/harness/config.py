"""Run configuration: dataclasses, JSON round-trip and dotted overrides."""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field

from ..errors import ConfigError
from ..synthdata import CorpusSpec


class Variant(str, enum.Enum):
    V1 = "v1"  # emotion conditioning only
    V2 = "v2"  # + orthogonality
    V3 = "v3"  # + contrastive
    V4 = "v4"  # + cross-attention

    @property
    def level(self) -> int:
        return int(self.value[1])

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, Variant):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"variant must be one of v1..v4, got {value!r}", fields=("variant",)) from None


@dataclass
class LossWeights:
    lambda_orth: float = 0.1
    lambda_contrast: float = 0.5


@dataclass
class ModelConfig:
    hidden: int = 64
    vocab: int = 32
    max_tokens: int = 8
    min_tokens: int = 3
    frames_per_sample: int = 4


@dataclass
class TrainConfig:
    variant: Variant = Variant.V2
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-3
    batch_size: int = 16
    steps: int = 2000
    seed: int = 0
    corpus_path: str | None = None
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train_fraction: float = 0.5
    contrastive_symmetric: bool = False
    query_per_token: bool = False
    pairwise_orth: bool = False
    probe_ridge: float = 1e-2
    eval_pairs: int = 10

    def validate(self) -> "TrainConfig":
        self.variant = Variant.parse(self.variant)
        checks = [
            ("lr", self.lr > 0, "must be > 0"),
            ("steps", self.steps >= 1, "must be >= 1"),
            ("batch_size", self.batch_size >= 2, "must be >= 2"),
            ("seed", 0 <= self.seed < 2**64, "must be a u64"),
            ("weights.lambda_orth", self.weights.lambda_orth >= 0, "must be >= 0"),
            ("weights.lambda_contrast", self.weights.lambda_contrast >= 0, "must be >= 0"),
            ("model.hidden", self.model.hidden >= 1, "must be >= 1"),
            ("model.vocab", self.model.vocab >= 2, "must be >= 2"),
            ("model.min_tokens", 1 <= self.model.min_tokens <= self.model.max_tokens,
             "must satisfy 1 <= min_tokens <= max_tokens"),
            ("model.frames_per_sample", self.model.frames_per_sample >= 1, "must be >= 1"),
            ("train_fraction", 0 < self.train_fraction < 1, "must lie in (0, 1)"),
            ("eval_pairs", self.eval_pairs >= 1, "must be >= 1"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name} {msg}", fields=(name,))
        self.corpus.validate()
        return self

    def corpus_spec(self) -> CorpusSpec:
        """The corpus spec with its seed tied to the run seed."""
        return dataclasses.replace(self.corpus, seed=self.seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["variant"] = Variant.parse(self.variant).value
        d["corpus"] = self.corpus.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}", fields=unknown)
        try:
            if "weights" in d:
                d["weights"] = _sub(LossWeights, d["weights"], "weights")
            if "model" in d:
                d["model"] = _sub(ModelConfig, d["model"], "model")
            if "corpus" in d:
                d["corpus"] = CorpusSpec.from_dict(d["corpus"])
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    def with_overrides(self, assignments) -> "TrainConfig":
        """Apply ``key.sub=value`` strings; values are parsed as JSON when possible."""
        d = self.to_dict()
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value", fields=(item,))
            key, raw = item.split("=", 1)
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            node = d
            parts = key.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config path {key!r}", fields=(key,))
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config path {key!r}", fields=(key,))
            node[parts[-1]] = value
        return TrainConfig.from_dict(d)


def _sub(cls, value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be an object", fields=(name,))
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(value) - known)
    if unknown:
        raise ConfigError(f"unknown {name} fields: {', '.join(unknown)}", fields=[f"{name}.{u}" for u in unknown])
    return cls(**value)
