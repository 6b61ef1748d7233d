"""Toy speaker/emotion encoders and direction-vector emotion embeddings.

An encoder mean-pools a (frames x F) feature matrix and multiplies by an
F x D projection. Emotion embeddings are built from paired emotional and
neutral encodings: each pair gives the unit vector pointing from the neutral
encoding to the emotional one, and the embedding is the plain mean of N such
unit vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .errors import DegeneratePairError, DimensionError, InsufficientPairsError

log = logging.getLogger(__name__)

DEGENERATE_EPS = 1e-9
DEFAULT_NUM_PAIRS = 10


@dataclass
class Encoder:
    projection: nc.Tensor
    frozen: bool = False

    def __post_init__(self):
        if not isinstance(self.projection, nc.Tensor):
            self.projection = nc.Tensor(self.projection, requires_grad=not self.frozen)
        self.projection.requires_grad = not self.frozen
        if self.projection.data.ndim != 2 or not np.all(np.isfinite(self.projection.data)):
            raise DimensionError(f"projection must be a finite F x D matrix, got shape {self.projection.shape}")

    @property
    def in_dim(self):
        return self.projection.shape[0]

    @property
    def out_dim(self):
        return self.projection.shape[1]

    @classmethod
    def orthonormal(cls, feature_dim: int, embed_dim: int, gen: np.random.Generator) -> "Encoder":
        """Frozen random projection with orthonormal columns (the extraction setting)."""
        q, _ = np.linalg.qr(gen.normal(size=(feature_dim, embed_dim)))
        return cls(nc.Tensor(q), frozen=True)

    @classmethod
    def trainable(cls, feature_dim: int, embed_dim: int, gen: np.random.Generator) -> "Encoder":
        w = gen.normal(scale=1.0 / np.sqrt(feature_dim), size=(feature_dim, embed_dim))
        return cls(nc.Tensor(w, requires_grad=True))


def _features(sample):
    return np.asarray(getattr(sample, "features", sample), dtype=np.float64)


def encode(enc: Encoder, sample) -> nc.Tensor:
    """Mean over frames, then project. Accepts a SpeechSample or a raw T x F array."""
    feats = _features(sample)
    if feats.ndim != 2 or feats.shape[1] != enc.in_dim:
        raise DimensionError(f"features of shape {feats.shape} do not match projection {enc.projection.shape}")
    pooled = nc.Tensor(feats.mean(axis=0).reshape(1, -1))
    return nc.reshape(nc.matmul(pooled, enc.projection), (enc.out_dim,))


def encode_batch(enc: Encoder, pooled: np.ndarray) -> nc.Tensor:
    """Project a B x F matrix of already mean-pooled features to B x D."""
    return nc.matmul(nc.Tensor(pooled), enc.projection)


def emotion_direction(u_e, u_n, eps: float = DEGENERATE_EPS) -> np.ndarray:
    u_e = np.asarray(getattr(u_e, "data", u_e), dtype=np.float64)
    u_n = np.asarray(getattr(u_n, "data", u_n), dtype=np.float64)
    if u_e.shape != u_n.shape:
        raise DimensionError(f"encodings have shapes {u_e.shape} and {u_n.shape}")
    diff = u_e - u_n
    norm = float(np.linalg.norm(diff))
    if norm <= eps:
        raise DegeneratePairError(f"emotional and neutral encodings differ by {norm:.3g} <= {eps}")
    return diff / norm


@dataclass
class EmotionEmbedding:
    vector: np.ndarray
    num_pairs: int
    emotion_id: int | None = None
    skipped: int = 0
    pair_ids: list = field(default_factory=list)


def aggregate_emotion(pairs, n: int = DEFAULT_NUM_PAIRS, emotion_id=None, pair_ids=None) -> EmotionEmbedding:
    """Mean of the first ``n`` usable pair directions, in input order.

    Degenerate pairs are skipped and counted. The mean is not renormalized.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pairs = list(pairs)
    ids = list(pair_ids) if pair_ids is not None else list(range(len(pairs)))
    directions, used, skipped = [], [], 0
    for pid, (u_e, u_n) in zip(ids, pairs):
        if len(directions) == n:
            break
        try:
            directions.append(emotion_direction(u_e, u_n))
            used.append(pid)
        except DegeneratePairError:
            skipped += 1
    if len(directions) < n:
        raise InsufficientPairsError(f"need {n} usable pairs, found {len(directions)}", usable=len(directions))
    if skipped:
        log.warning("skipped %d degenerate pair(s) while aggregating emotion %s", skipped, emotion_id)
    vector = np.sum(directions, axis=0) / n
    return EmotionEmbedding(vector, n, emotion_id, skipped, used)


def extract_emotion(enc: Encoder, corpus, emotion_id: int, n: int = DEFAULT_NUM_PAIRS) -> EmotionEmbedding:
    """Encode every pair of ``emotion_id`` in pair order and aggregate."""
    chosen = [(pid, emo, neu) for pid, (emo, neu) in corpus.pairs().items() if emo.emotion_id == emotion_id]
    encoded = [(encode(enc, emo).data, encode(enc, neu).data) for _, emo, neu in chosen]
    return aggregate_emotion(encoded, n, emotion_id=emotion_id, pair_ids=[pid for pid, _, _ in chosen])


def planted_image(enc: Encoder, direction) -> np.ndarray:
    """Where a feature-space direction lands in embedding space under ``enc``."""
    return np.asarray(direction, dtype=np.float64) @ enc.projection.data


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
