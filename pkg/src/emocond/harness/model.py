"""The trainable pipeline and its persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import numcore as nc
from .. import rng as rngmod
from ..conditioning import CrossAttention, TokenEncoder
from ..disentangle import ProjectionHeads
from ..encoders import Encoder
from ..errors import FormatError
from ..flowmatch import VectorFieldNet
from ..numcore import tnsr
from .config import TrainConfig


@dataclass
class Model:
    speaker_encoder: Encoder
    emotion_encoder: Encoder
    token_encoder: TokenEncoder
    cross_attention: CrossAttention
    heads: ProjectionHeads
    vector_field: VectorFieldNet

    @classmethod
    def init(cls, config: TrainConfig) -> "Model":
        gen = rngmod.stream(config.seed, "init")
        spec, mc = config.corpus, config.model
        f, d = spec.feature_dim, spec.embed_dim
        return cls(
            speaker_encoder=Encoder.trainable(f, d, gen),
            emotion_encoder=Encoder.trainable(f, d, gen),
            token_encoder=TokenEncoder.init(mc.vocab, mc.max_tokens, d, gen),
            cross_attention=CrossAttention.init(d, gen),
            heads=ProjectionHeads.init(d, gen),
            vector_field=VectorFieldNet.init(f, 4 * d, mc.hidden, gen),
        )

    def named_parameters(self):
        yield "speaker_encoder.projection", self.speaker_encoder.projection
        yield "emotion_encoder.projection", self.emotion_encoder.projection
        for name, p in zip(("embedding", "positional", "W_q", "W_k", "W_v"), self.token_encoder.parameters()):
            yield f"token_encoder.{name}", p
        for name, p in zip(("W_q", "W_k", "W_v"), self.cross_attention.parameters()):
            yield f"cross_attention.{name}", p
        yield "heads.P_s", self.heads.P_s
        yield "heads.P_e", self.heads.P_e
        for name, p in zip(("W1", "b1", "W2", "b2", "W3", "b3"), self.vector_field.parameters()):
            yield f"vector_field.{name}", p

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def with_parameters(self, tensors) -> "Model":
        """Same architecture, built on the given leaf tensors (in ``parameters()`` order)."""
        t = list(tensors)
        if len(t) != len(self.parameters()):
            raise ValueError(f"expected {len(self.parameters())} tensors, got {len(t)}")
        vf = self.vector_field
        return Model(
            speaker_encoder=Encoder(t[0]),
            emotion_encoder=Encoder(t[1]),
            token_encoder=TokenEncoder(*t[2:7]),
            cross_attention=CrossAttention(*t[7:10]),
            heads=ProjectionHeads(t[10], t[11]),
            vector_field=VectorFieldNet(*t[12:18], vf.feature_dim, vf.cond_dim),
        )

    def state(self) -> dict:
        return {name: p.data for name, p in self.named_parameters()}

    def save(self, out_dir) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, p in self.named_parameters():
            path = out / f"{name}.tnsr"
            tnsr.save(path, p.data)
            written.append(path)
        meta = {"parameters": [n for n, _ in self.named_parameters()],
                "feature_dim": self.vector_field.feature_dim, "cond_dim": self.vector_field.cond_dim}
        (out / "model.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        written.append(out / "model.json")
        return written

    @classmethod
    def load(cls, model_dir, config: TrainConfig) -> "Model":
        model = cls.init(config)
        root = Path(model_dir)
        for name, p in model.named_parameters():
            path = root / f"{name}.tnsr"
            if not path.exists():
                raise FormatError(f"model directory {root} is missing {path.name}")
            arr = tnsr.load(path)
            if arr.shape != p.shape:
                raise FormatError(f"{name}: stored shape {arr.shape} does not match config shape {p.shape}")
            arr.setflags(write=False)
            p.data = arr
        return model


def frozen_view(enc: Encoder) -> Encoder:
    return Encoder(nc.Tensor(np.array(enc.projection.data)), frozen=True)
