"""Speaker/emotion disentanglement regularizers.

``orthogonality_loss`` penalizes cosine similarity between every emotion
embedding and every speaker embedding in a batch, plus the squared mean of
the index-aligned cosines. ``contrastive_loss`` penalizes absolute inner
products between each sample's combined projection and the emotion
projections of later samples in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .errors import DimensionError, EmptyBatchError, InsufficientBatchError

NORM_EPS = 1e-9


@dataclass
class EmbeddingBatch:
    S: nc.Tensor
    E: nc.Tensor
    speaker_ids: list = field(default_factory=list)
    emotion_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.S, self.E = nc.constant(self.S), nc.constant(self.E)
        if self.S.shape != self.E.shape or self.S.data.ndim != 2:
            raise DimensionError(f"S {self.S.shape} and E {self.E.shape} must be equal B x D matrices")
        if self.S.shape[0] == 0:
            raise EmptyBatchError("embedding batch is empty")

    @property
    def size(self):
        return self.S.shape[0]


@dataclass
class ProjectionHeads:
    P_s: nc.Tensor
    P_e: nc.Tensor

    @classmethod
    def identity(cls, dim):
        return cls(nc.Tensor(np.eye(dim)), nc.Tensor(np.eye(dim)))

    @classmethod
    def init(cls, dim, gen: np.random.Generator):
        scale = 1.0 / np.sqrt(dim)
        return cls(nc.Tensor(gen.normal(scale=scale, size=(dim, dim)), requires_grad=True),
                   nc.Tensor(gen.normal(scale=scale, size=(dim, dim)), requires_grad=True))

    def parameters(self):
        return [self.P_s, self.P_e]


def cosine_matrix(E: nc.Tensor, S: nc.Tensor, eps: float = NORM_EPS) -> nc.Tensor:
    """B x B matrix of cos(E_i, S_j); norms are floored at ``eps``."""
    n_e = nc.clamp_min(nc.row_l2_norms(E), eps)
    n_s = nc.clamp_min(nc.row_l2_norms(S), eps)
    return nc.matmul(E, nc.transpose(S)) / nc.outer(n_e, n_s)


def orthogonality_loss(batch: EmbeddingBatch, pairwise_mode: bool = False, eps: float = NORM_EPS) -> nc.Tensor:
    """Cross-orthogonality penalty between speaker and emotion embeddings.

    Default mode: ``||C||_F^2 + mean_i(C_ii)^2`` with ``C`` the cosine
    matrix between rows of E and rows of S. Pairwise mode: mean absolute raw
    inner product ``|<E_i, S_j>|`` over ordered pairs with ``i != j``.
    """
    b = batch.size
    if pairwise_mode:
        if b < 2:
            raise InsufficientBatchError("pairwise orthogonality needs at least 2 rows")
        gram = nc.matmul(batch.E, nc.transpose(batch.S))
        off_diag = 1.0 - np.eye(b)
        return nc.sum(nc.absolute(gram) * off_diag) / float(b * (b - 1))
    cos = cosine_matrix(batch.E, batch.S, eps)
    aligned = nc.sum(cos * np.eye(b)) / float(b)
    return nc.sum(nc.square(cos)) + nc.square(aligned)


def contrastive_loss(batch: EmbeddingBatch, heads: ProjectionHeads, symmetric: bool = False) -> nc.Tensor:
    """Mean |<h_i, P_e E_j>| over pairs i < j, with h_i = P_s S_i + P_e E_i.

    ``symmetric=True`` uses every ordered pair i != j instead.
    """
    b = batch.size
    if b < 2:
        raise InsufficientBatchError(f"contrastive loss needs a batch of at least 2, got {b}")
    proj_e = nc.matmul(batch.E, nc.transpose(heads.P_e))
    h = nc.matmul(batch.S, nc.transpose(heads.P_s)) + proj_e
    gram = nc.matmul(h, nc.transpose(proj_e))
    if symmetric:
        mask, count = 1.0 - np.eye(b), b * (b - 1)
    else:
        mask, count = np.triu(np.ones((b, b)), k=1), b * (b - 1) // 2
    return nc.sum(nc.absolute(gram) * mask) / float(count)
