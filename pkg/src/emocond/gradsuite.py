"""Finite-difference checks of every loss path, on fixed seeds."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .conditioning import CrossAttention, cross_attend
from .disentangle import EmbeddingBatch, ProjectionHeads, contrastive_loss, orthogonality_loss
from .flowmatch import VectorFieldNet, cfm_loss
from .harness.config import LossWeights, ModelConfig, TrainConfig, Variant
from .harness.model import Model
from .harness.train import combined_loss, make_batch, prepare
from .synthdata import CorpusSpec, make_corpus

TOLERANCE = 1e-4
STEP = 1e-5
SEEDS = (0, 1, 2)


@dataclass
class CheckResult:
    name: str
    seed: int
    max_rel_err: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def _orth(pairwise):
    def check(seed):
        g = np.random.default_rng(seed)
        S, E = g.normal(size=(4, 8)), g.normal(size=(4, 8))
        return nc.grad_check(lambda s, e: orthogonality_loss(EmbeddingBatch(s, e), pairwise), [S, E], STEP)
    return check


def _contrast(seed):
    g = np.random.default_rng(seed)
    args = [g.normal(size=(4, 8)), g.normal(size=(4, 8)), g.normal(size=(8, 8)), g.normal(size=(8, 8))]
    return nc.grad_check(
        lambda s, e, ps, pe: contrastive_loss(EmbeddingBatch(s, e), ProjectionHeads(ps, pe)), args, STEP)


def _cross_attend(seed):
    g = np.random.default_rng(seed)
    d, n = 4, 5
    mask = np.array([True, True, False, True, True])
    readout = g.normal(size=(n, d))
    args = [g.normal(size=d)] + [g.normal(size=(d, d)) for _ in range(3)] + [g.normal(size=(n, d))]

    def f(e, wq, wk, wv, h):
        return nc.sum(cross_attend(CrossAttention(wq, wk, wv), e, h, mask) * readout)

    return nc.grad_check(f, args, STEP)


def _cfm(seed):
    g = np.random.default_rng(seed)
    f_dim, c_dim = 3, 4
    net = VectorFieldNet.init(f_dim, c_dim, 6, g)
    x0, x1 = g.normal(size=(5, f_dim)), g.normal(size=(5, f_dim))
    t = g.uniform(size=5)
    args = [p.data for p in net.parameters()] + [g.normal(size=(5, c_dim))]

    def f(W1, b1, W2, b2, W3, b3, cond):
        return cfm_loss(VectorFieldNet(W1, b1, W2, b2, W3, b3, f_dim, c_dim), x0, x1, t, cond)

    return nc.grad_check(f, args, STEP)


def tiny_config(seed: int, variant=Variant.V4) -> TrainConfig:
    return TrainConfig(
        variant=variant, seed=seed, batch_size=3, steps=1,
        weights=LossWeights(0.1, 0.5),
        corpus=CorpusSpec(num_speakers=2, num_emotions=2, frames=3, feature_dim=6, embed_dim=3,
                          noise_sigma=0.1, pairs_per_stratum=2, seed=seed),
        model=ModelConfig(hidden=5, vocab=5, max_tokens=3, min_tokens=1, frames_per_sample=2),
    ).validate()


def _combined(seed):
    cfg = tiny_config(seed)
    model = Model.init(cfg)
    data = prepare(make_corpus(cfg.corpus_spec()), cfg)
    g = np.random.default_rng(seed)
    batch = make_batch(data, np.array([0, 1, 3]), cfg.model.frames_per_sample, g)

    def f(*tensors):
        return combined_loss(model.with_parameters(tensors), batch, cfg)[0]

    return nc.grad_check(f, [p.data for p in model.parameters()], STEP)


CHECKS = {
    "orthogonality_loss[default]": _orth(False),
    "orthogonality_loss[pairwise]": _orth(True),
    "contrastive_loss": _contrast,
    "cross_attend": _cross_attend,
    "cfm_loss": _cfm,
    "combined_loss[v4]": _combined,
}


def run_suite(seeds=SEEDS, names=None) -> list:
    results = []
    for name, check in CHECKS.items():
        if names and name not in names:
            continue
        for seed in seeds:
            start = time.perf_counter()
            err = check(seed)
            results.append(CheckResult(name, seed, err, time.perf_counter() - start))
    return results


def format_table(results) -> str:
    lines = [f"{'check':<30} {'seed':>4} {'max_rel_err':>12}  result"]
    for r in results:
        lines.append(f"{r.name:<30} {r.seed:>4} {r.max_rel_err:>12.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
