"""Ground-truth-aware evaluation of a trained model."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..encoders import cosine, extract_emotion, planted_image
from ..errors import InsufficientPairsError, OracleUnavailableError
from .model import Model, frozen_view

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    mean_abs_cross_cosine: float
    emotion_probe_acc: float
    speaker_probe_acc: float
    direction_recovery_cosine: float | None
    final_losses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _embeddings(model: Model, corpus):
    pooled = np.stack([s.features.mean(axis=0) for s in corpus.samples])
    return pooled @ model.speaker_encoder.projection.data, pooled @ model.emotion_encoder.projection.data


def mean_abs_cross_cosine(S: np.ndarray, E: np.ndarray, eps: float = 1e-9) -> float:
    """Mean over rows of |cos(s_i, e_i)|."""
    num = np.einsum("ij,ij->i", S, E)
    den = np.maximum(np.linalg.norm(S, axis=1), eps) * np.maximum(np.linalg.norm(E, axis=1), eps)
    return float(np.mean(np.abs(num / den)))


class RidgeProbe:
    """Closed-form ridge regression onto one-hot labels; predicts the argmax.

    Features are standardized with training statistics and a bias column is
    appended (the bias is not penalized).
    """

    def __init__(self, alpha: float = 1e-2):
        self.alpha = alpha

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        self.mu_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd_ = np.where(sd > 1e-12, sd, 1.0)
        Z = self._design(X)
        Y = (y[:, None] == self.classes_[None, :]).astype(np.float64)
        reg = self.alpha * len(X) * np.eye(Z.shape[1])
        reg[-1, -1] = 0.0
        self.coef_ = np.linalg.solve(Z.T @ Z + reg, Z.T @ Y)
        return self

    def _design(self, X):
        Z = (X - self.mu_) / self.sd_
        return np.hstack([Z, np.ones((len(Z), 1))])

    def predict(self, X):
        return self.classes_[np.argmax(self._design(np.asarray(X, dtype=np.float64)) @ self.coef_, axis=1)]

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))


def probe_accuracy(train_X, train_y, eval_X, eval_y, alpha: float = 1e-2) -> float:
    return RidgeProbe(alpha).fit(train_X, train_y).score(eval_X, eval_y)


def direction_recovery(model: Model, corpus, n: int = 10) -> float:
    """Mean over non-neutral emotions of cos(aggregated embedding, encoder image of planted direction)."""
    truth = corpus.ground_truth
    if truth is None:
        raise OracleUnavailableError("corpus carries no ground truth")
    enc = frozen_view(model.emotion_encoder)
    scores = []
    for k in range(1, truth.emotion_directions.shape[0]):
        emb = extract_emotion(enc, corpus, k, n)
        scores.append(cosine(emb.vector, planted_image(enc, truth.emotion_directions[k])))
    return float(np.mean(scores))


def evaluate(model: Model, train_corpus, eval_corpus, final_losses=None, probe_ridge: float = 1e-2,
             eval_pairs: int = 10) -> EvalReport:
    """Cross-cosine, linear probes (fit on ``train_corpus``) and direction recovery."""
    S_tr, E_tr = _embeddings(model, train_corpus)
    S_ev, E_ev = _embeddings(model, eval_corpus)
    spk_tr = [s.speaker_id for s in train_corpus.samples]
    spk_ev = [s.speaker_id for s in eval_corpus.samples]
    emo_tr = [s.emotion_id for s in train_corpus.samples]
    emo_ev = [s.emotion_id for s in eval_corpus.samples]
    notes = []
    try:
        recovery = direction_recovery(model, eval_corpus, eval_pairs)
    except (OracleUnavailableError, InsufficientPairsError) as exc:
        log.warning("direction recovery skipped: %s", exc)
        notes.append(f"direction recovery unavailable: {exc}")
        recovery = None
    return EvalReport(
        mean_abs_cross_cosine=mean_abs_cross_cosine(S_ev, E_ev),
        emotion_probe_acc=probe_accuracy(E_tr, emo_tr, E_ev, emo_ev, probe_ridge),
        speaker_probe_acc=probe_accuracy(S_tr, spk_tr, S_ev, spk_ev, probe_ridge),
        direction_recovery_cosine=recovery,
        final_losses=dict(final_losses or {}),
        notes=notes,
    )
