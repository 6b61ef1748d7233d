"""Combined objective and the training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import numcore as nc
from .. import rng as rngmod
from ..conditioning import cross_attend_batch, encode_token_batch, pooling_matrix
from ..disentangle import EmbeddingBatch, contrastive_loss, orthogonality_loss
from ..errors import DivergenceError
from ..flowmatch import cfm_loss
from ..optim import Adam
from .config import TrainConfig, Variant
from .model import Model

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "loss_total", "loss_cfm", "loss_orth", "loss_contrast", "grad_norm")


@dataclass
class TrainData:
    """Arrays derived once from a corpus split: pooled features, frames, tokens, labels."""

    pooled: np.ndarray  # N x F
    frames: np.ndarray  # N x T x F
    token_ids: np.ndarray  # N x L
    token_mask: np.ndarray  # N x L
    speaker_ids: np.ndarray
    emotion_ids: np.ndarray

    def __len__(self):
        return len(self.pooled)


def token_sequence(seed: int, pair_id: int, neutral: bool, config: TrainConfig):
    """Deterministic padded token sequence standing in for a sample's text."""
    mc = config.model
    gen = rngmod.stream(seed, f"tokens/{pair_id}/{int(neutral)}")
    n = int(gen.integers(mc.min_tokens, mc.max_tokens + 1))
    ids = np.zeros(mc.max_tokens, dtype=np.int64)
    ids[:n] = gen.integers(0, mc.vocab, size=n)
    mask = np.arange(mc.max_tokens) < n
    return ids, mask


def prepare(corpus, config: TrainConfig) -> TrainData:
    frames = np.stack([s.features for s in corpus.samples])
    toks = [token_sequence(config.seed, s.pair_id, s.emotion_id == 0, config) for s in corpus.samples]
    return TrainData(
        pooled=frames.mean(axis=1),
        frames=frames,
        token_ids=np.stack([t[0] for t in toks]),
        token_mask=np.stack([t[1] for t in toks]),
        speaker_ids=np.array([s.speaker_id for s in corpus.samples]),
        emotion_ids=np.array([s.emotion_id for s in corpus.samples]),
    )


@dataclass
class Batch:
    pooled: np.ndarray
    token_ids: np.ndarray
    token_mask: np.ndarray
    x0: np.ndarray  # (B*K) x F
    x1: np.ndarray  # (B*K) x F
    t: np.ndarray  # B*K
    speaker_ids: np.ndarray
    emotion_ids: np.ndarray


def make_batch(data: TrainData, index: np.ndarray, frames_per_sample: int, gen: np.random.Generator) -> Batch:
    b = len(index)
    n_frames = data.frames.shape[1]
    pick = gen.integers(0, n_frames, size=(b, frames_per_sample))
    x1 = data.frames[index[:, None], pick].reshape(b * frames_per_sample, -1)
    return Batch(
        pooled=data.pooled[index],
        token_ids=data.token_ids[index],
        token_mask=data.token_mask[index],
        x0=gen.standard_normal(x1.shape),
        x1=x1,
        t=gen.uniform(0.0, 1.0, size=b * frames_per_sample),
        speaker_ids=data.speaker_ids[index],
        emotion_ids=data.emotion_ids[index],
    )


def embed(model: Model, pooled: np.ndarray):
    S = nc.matmul(nc.Tensor(pooled), model.speaker_encoder.projection)
    E = nc.matmul(nc.Tensor(pooled), model.emotion_encoder.projection)
    return S, E


def combined_loss(model: Model, batch: Batch, config: TrainConfig):
    """Total objective and its per-term breakdown.

    The regularizers are always evaluated for logging but only enter the
    total for variants that enable them. The breakdown's ``cfm``,
    ``orth_weighted`` and ``contrast_weighted`` entries sum to ``total``.
    """
    variant = config.variant
    S, E = embed(model, batch.pooled)
    h_lm = encode_token_batch(model.token_encoder, batch.token_ids, batch.token_mask)
    if variant.level >= Variant.V4.level:
        h_attn = cross_attend_batch(model.cross_attention, E, h_lm, batch.token_mask, config.query_per_token)
    else:
        h_attn = h_lm
    pool = nc.Tensor(pooling_matrix(batch.token_mask))
    cond = nc.concat_cols([nc.matmul(pool, h_attn), nc.matmul(pool, h_lm), S, E])
    k = len(batch.t) // len(batch.pooled)
    cond = nc.take_rows(cond, np.repeat(np.arange(len(batch.pooled)), k))
    l_cfm = cfm_loss(model.vector_field, batch.x0, batch.x1, batch.t, cond)

    emb = EmbeddingBatch(S, E, list(batch.speaker_ids), list(batch.emotion_ids))
    l_orth = orthogonality_loss(emb, config.pairwise_orth)
    l_con = contrastive_loss(emb, model.heads, config.contrastive_symmetric)

    total = l_cfm
    w_orth = w_con = 0.0
    if variant.level >= Variant.V2.level:
        term = l_orth * config.weights.lambda_orth
        total = total + term
        w_orth = term.item()
    if variant.level >= Variant.V3.level:
        term = l_con * config.weights.lambda_contrast
        total = total + term
        w_con = term.item()
    breakdown = {
        "total": total.item(),
        "cfm": l_cfm.item(),
        "orth": l_orth.item(),
        "contrast": l_con.item(),
        "orth_weighted": w_orth,
        "contrast_weighted": w_con,
    }
    return total, breakdown


def batch_order(n: int, batch_size: int, steps: int, gen: np.random.Generator):
    """Yield index arrays: shuffled epochs, each cut into full batches."""
    produced = 0
    while produced < steps:
        perm = gen.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield perm[start:start + batch_size]
            produced += 1
            if produced == steps:
                return


def train(config: TrainConfig, train_corpus, log_path=None, model: Model | None = None):
    """Adam on the combined objective. Returns ``(model, metric_log)``.

    ``metric_log`` has one dict per step with the columns of ``LOG_COLUMNS``.
    If ``log_path`` is given it is written as CSV.
    """
    config.validate()
    model = model or Model.init(config)
    data = prepare(train_corpus, config)
    if len(data) < config.batch_size:
        raise DivergenceError(f"training set has {len(data)} samples, fewer than batch_size", step=0)
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    gen = rngmod.stream(config.seed, "batching")
    rows = []
    last = {}
    for step, index in enumerate(batch_order(len(data), config.batch_size, config.steps, gen)):
        batch = make_batch(data, index, config.model.frames_per_sample, gen)
        total, parts = combined_loss(model, batch, config)
        if not all(math.isfinite(v) for v in parts.values()):
            raise DivergenceError(f"non-finite loss at step {step}", step=step, last_finite=last)
        grads = nc.backward(total, params)
        gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if not math.isfinite(gnorm):
            raise DivergenceError(f"non-finite gradient at step {step}", step=step, last_finite=last)
        opt.step(grads)
        last = parts
        rows.append({"step": step, "loss_total": parts["total"], "loss_cfm": parts["cfm"],
                     "loss_orth": parts["orth"], "loss_contrast": parts["contrast"], "grad_norm": gnorm})
        if step % 500 == 0:
            log.info("step %d total %.4f cfm %.4f orth %.4f", step, parts["total"], parts["cfm"], parts["orth"])
    if log_path is not None:
        write_log(rows, log_path)
    return model, rows


def write_log(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([r["step"]] + [repr(float(r[c])) for c in LOG_COLUMNS[1:]])
