"""Token-sequence encoder stand-in and emotion-query cross-attention.

The token encoder is one masked self-attention block over token plus
positional embeddings; it only needs to be a deterministic, differentiable
source of an L x D sequence ``h_lm``.

Cross-attention uses the emotion embedding as a single query against keys
and values projected from ``h_lm``. The attended context vector is added
back to every token row, so the output keeps the L x D shape of the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import DimensionError, InvalidMaskError, VocabError


@dataclass
class TokenSequence:
    token_ids: list
    pad_mask: list  # True marks a real token

    def __post_init__(self):
        self.token_ids = [int(t) for t in self.token_ids]
        self.pad_mask = [bool(m) for m in self.pad_mask]
        if not self.token_ids or len(self.token_ids) != len(self.pad_mask):
            raise DimensionError("token_ids and pad_mask must be non-empty and the same length")
        if not any(self.pad_mask):
            raise InvalidMaskError("token sequence has no real tokens")

    def __len__(self):
        return len(self.token_ids)


def _param(gen, shape, scale):
    return nc.Tensor(gen.normal(scale=scale, size=shape), requires_grad=True)


@dataclass
class TokenEncoder:
    embedding: nc.Tensor  # vocab x D
    positional: nc.Tensor  # max_len x D
    W_q: nc.Tensor
    W_k: nc.Tensor
    W_v: nc.Tensor

    @classmethod
    def init(cls, vocab: int, max_len: int, dim: int, gen: np.random.Generator) -> "TokenEncoder":
        if vocab < 2:
            raise DimensionError("vocab must be >= 2")
        s = 1.0 / math.sqrt(dim)
        return cls(_param(gen, (vocab, dim), 1.0), _param(gen, (max_len, dim), 0.5),
                   _param(gen, (dim, dim), s), _param(gen, (dim, dim), s), _param(gen, (dim, dim), s))

    @property
    def vocab(self):
        return self.embedding.shape[0]

    @property
    def dim(self):
        return self.embedding.shape[1]

    def parameters(self):
        return [self.embedding, self.positional, self.W_q, self.W_k, self.W_v]


@dataclass
class CrossAttention:
    W_q: nc.Tensor
    W_k: nc.Tensor
    W_v: nc.Tensor

    def __post_init__(self):
        shapes = {w.shape for w in self.parameters()}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2 or len(set(next(iter(shapes)))) != 1:
            raise DimensionError(f"cross-attention projections must be equal square matrices, got {shapes}")

    @classmethod
    def init(cls, dim: int, gen: np.random.Generator) -> "CrossAttention":
        s = 1.0 / math.sqrt(dim)
        return cls(_param(gen, (dim, dim), s), _param(gen, (dim, dim), s), _param(gen, (dim, dim), s))

    @property
    def dim(self):
        return self.W_q.shape[0]

    def parameters(self):
        return [self.W_q, self.W_k, self.W_v]


def _check_ids(enc: TokenEncoder, ids: np.ndarray):
    if ids.size and (ids.min() < 0 or ids.max() >= enc.vocab):
        raise VocabError(f"token ids must lie in [0, {enc.vocab}), got range [{ids.min()}, {ids.max()}]")
    if ids.shape[-1] > enc.positional.shape[0]:
        raise DimensionError(f"sequence length {ids.shape[-1]} exceeds max_len {enc.positional.shape[0]}")


def _self_attention(enc: TokenEncoder, x: nc.Tensor, mask: np.ndarray) -> nc.Tensor:
    q, k, v = x @ enc.W_q, x @ enc.W_k, x @ enc.W_v
    attn = nc.softmax_rows(nc.matmul(q, nc.transpose(k)) / math.sqrt(enc.dim), mask)
    return x + nc.matmul(attn, v)


def encode_tokens(enc: TokenEncoder, seq: TokenSequence) -> nc.Tensor:
    """h_lm for one sequence (L x D). Every position attends to real tokens only."""
    ids = np.asarray(seq.token_ids)
    _check_ids(enc, ids)
    n = len(ids)
    x = nc.take_rows(enc.embedding, ids) + nc.take_rows(enc.positional, np.arange(n))
    mask = np.tile(np.asarray(seq.pad_mask), (n, 1))
    return _self_attention(enc, x, mask)


def encode_token_batch(enc: TokenEncoder, ids: np.ndarray, pad_mask: np.ndarray) -> nc.Tensor:
    """Encode B padded sequences at once, stacked into a (B*L) x D matrix.

    A block mask keeps each sequence's attention inside itself, so row
    block ``i`` equals ``encode_tokens`` of sequence ``i``.
    """
    ids = np.asarray(ids)
    pad_mask = np.asarray(pad_mask, dtype=bool)
    _check_ids(enc, ids)
    b, n = ids.shape
    x = nc.take_rows(enc.embedding, ids.reshape(-1)) + nc.take_rows(enc.positional, np.tile(np.arange(n), b))
    return _self_attention(enc, x, block_mask(pad_mask, per_row=n))


def block_mask(pad_mask: np.ndarray, per_row: int = 1) -> np.ndarray:
    """Mask letting ``per_row`` consecutive query rows per sequence see that sequence's real tokens."""
    b, n = pad_mask.shape
    mask = np.zeros((b, b * n), dtype=bool)
    for i in range(b):
        mask[i, i * n:(i + 1) * n] = pad_mask[i]
    return np.repeat(mask, per_row, axis=0)


def pooling_matrix(pad_mask: np.ndarray) -> np.ndarray:
    """B x (B*L) matrix averaging the real-token rows of each sequence."""
    pad_mask = np.asarray(pad_mask, dtype=bool)
    weights = pad_mask / pad_mask.sum(axis=1, keepdims=True)
    return block_mask(pad_mask) * weights.reshape(1, -1)


def _attend(ca: CrossAttention, e, h_lm: nc.Tensor, pad_mask, query_per_token: bool):
    e = nc.constant(e)
    h_lm = nc.constant(h_lm)
    d = ca.dim
    if e.shape != (d,) or h_lm.data.ndim != 2 or h_lm.shape[1] != d:
        raise DimensionError(f"cross_attend: e {e.shape} and h_lm {h_lm.shape} do not fit projections of size {d}")
    n = h_lm.shape[0]
    mask = np.ones(n, dtype=bool) if pad_mask is None else np.asarray(pad_mask, dtype=bool)
    if mask.shape != (n,):
        raise DimensionError(f"pad_mask has shape {mask.shape}, expected ({n},)")
    if not mask.any():
        raise InvalidMaskError("cross_attend: every position is padding")
    queries = nc.repeat_rows(e, n) if query_per_token else nc.reshape(e, (1, d))
    q = nc.matmul(queries, ca.W_q)
    k = nc.matmul(h_lm, ca.W_k)
    v = nc.matmul(h_lm, ca.W_v)
    logits = nc.matmul(q, nc.transpose(k)) / math.sqrt(d)
    attn = nc.softmax_rows(logits, np.tile(mask, (q.shape[0], 1)))
    context = nc.matmul(attn, v)
    if query_per_token:
        return h_lm + context, attn
    return h_lm + nc.repeat_rows(nc.reshape(context, (d,)), n), attn


def cross_attend(ca: CrossAttention, e, h_lm, pad_mask=None, query_per_token: bool = False) -> nc.Tensor:
    """Emotion-query attention over ``h_lm`` with the context added residually to every row."""
    return _attend(ca, e, h_lm, pad_mask, query_per_token)[0]


def attention_weights(ca: CrossAttention, e, h_lm, pad_mask=None) -> np.ndarray:
    """The 1 x L attention distribution of the emotion query."""
    return _attend(ca, e, h_lm, pad_mask, False)[1].data


def cross_attend_batch(ca: CrossAttention, E: nc.Tensor, h_lm: nc.Tensor, pad_mask: np.ndarray,
                       query_per_token: bool = False) -> nc.Tensor:
    """Batched :func:`cross_attend`: E is B x D, h_lm is the stacked (B*L) x D sequence matrix."""
    pad_mask = np.asarray(pad_mask, dtype=bool)
    b, n = pad_mask.shape
    d = ca.dim
    if query_per_token:
        queries = nc.take_rows(E, np.repeat(np.arange(b), n))
        mask = block_mask(pad_mask, per_row=n)
    else:
        queries = E
        mask = block_mask(pad_mask)
    q = nc.matmul(queries, ca.W_q)
    k = nc.matmul(h_lm, ca.W_k)
    v = nc.matmul(h_lm, ca.W_v)
    attn = nc.softmax_rows(nc.matmul(q, nc.transpose(k)) / math.sqrt(d), mask)
    context = nc.matmul(attn, v)
    if not query_per_token:
        context = nc.take_rows(context, np.repeat(np.arange(b), n))
    return h_lm + context
