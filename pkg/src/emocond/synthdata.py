"""Synthetic factorized corpus standing in for paired emotional speech.

Every frame of a sample is ``speaker_basis + intensity * emotion_direction +
noise``. Emotional samples come in pairs with a neutral sample of the same
speaker (fresh noise), so the emotion offset is known exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, FormatError, SplitError
from .numcore import tnsr

NEUTRAL = 0


@dataclass(frozen=True)
class CorpusSpec:
    num_speakers: int = 4
    num_emotions: int = 4
    frames: int = 16
    feature_dim: int = 32
    embed_dim: int = 16
    noise_sigma: float = 0.1
    emotion_intensity_range: tuple = (0.5, 1.5)
    pairs_per_stratum: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "emotion_intensity_range", tuple(float(v) for v in self.emotion_intensity_range))

    def validate(self) -> "CorpusSpec":
        if self.feature_dim < self.embed_dim:
            raise ConfigError(
                f"feature_dim ({self.feature_dim}) must be >= embed_dim ({self.embed_dim})",
                fields=("feature_dim", "embed_dim"))
        checks = [
            ("num_speakers", self.num_speakers >= 2, "must be >= 2"),
            ("num_emotions", self.num_emotions >= 2, "must be >= 2"),
            ("frames", self.frames >= 1, "must be >= 1"),
            ("embed_dim", self.embed_dim >= 1, "must be >= 1"),
            ("feature_dim", self.feature_dim >= self.num_speakers,
             f"must be >= num_speakers ({self.num_speakers}) for orthogonal speaker bases"),
            ("noise_sigma", self.noise_sigma >= 0, "must be >= 0"),
            ("pairs_per_stratum", self.pairs_per_stratum >= 1, "must be >= 1"),
            ("seed", 0 <= self.seed < 2**64, "must be a u64"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name} {msg}", fields=(name,))
        lo, hi = self.emotion_intensity_range
        if len(self.emotion_intensity_range) != 2 or lo > hi:
            raise ConfigError("emotion_intensity_range must be [lo, hi] with lo <= hi",
                              fields=("emotion_intensity_range",))
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown corpus fields: {', '.join(unknown)}", fields=unknown)
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(f"bad corpus spec: {exc}") from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["emotion_intensity_range"] = list(self.emotion_intensity_range)
        return d


@dataclass(frozen=True)
class SpeechSample:
    features: np.ndarray  # frames x feature_dim
    speaker_id: int
    emotion_id: int
    intensity: float
    pair_id: int


@dataclass(frozen=True)
class GroundTruth:
    speaker_bases: np.ndarray  # num_speakers x F, orthonormal rows
    emotion_directions: np.ndarray  # num_emotions x F, row 0 zero


@dataclass
class Corpus:
    spec: CorpusSpec
    samples: list
    ground_truth: GroundTruth | None = None
    _hash: str | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.samples)

    def pairs(self) -> dict:
        """pair_id -> (emotional sample, neutral sample)."""
        table: dict = {}
        for s in self.samples:
            slot = table.setdefault(s.pair_id, [None, None])
            slot[1 if s.emotion_id == NEUTRAL else 0] = s
        return {k: tuple(v) for k, v in sorted(table.items())}

    def content_hash(self) -> str:
        if self._hash is None:
            self._hash = corpus_hash(self.spec, self.samples)
        return self._hash

    def subset(self, samples) -> "Corpus":
        return Corpus(self.spec, list(samples), self.ground_truth)


def _planted_factors(spec: CorpusSpec, gen: np.random.Generator) -> GroundTruth:
    s, e, f = spec.num_speakers, spec.num_emotions, spec.feature_dim
    if f >= s + e - 1:
        q, _ = np.linalg.qr(gen.normal(size=(f, s + e - 1)))
        bases = q[:, :s].T
        dirs = q[:, s:].T
    else:
        q, _ = np.linalg.qr(gen.normal(size=(f, s)))
        bases = q.T
        dirs = gen.normal(size=(e - 1, f))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    emotion = np.vstack([np.zeros((1, f)), dirs])
    return GroundTruth(np.ascontiguousarray(bases), np.ascontiguousarray(emotion))


def generate_corpus(spec: CorpusSpec):
    """Build the paired corpus. Returns ``(samples, ground_truth)``.

    Samples are ordered by speaker, then emotion, then pair index; each pair
    contributes its emotional member followed by its neutral partner.
    """
    spec.validate()
    gen = rngmod.stream(spec.seed, "corpus")
    truth = _planted_factors(spec, gen)
    lo, hi = spec.emotion_intensity_range
    t, f = spec.frames, spec.feature_dim
    samples = []
    pair_id = 0
    for spk in range(spec.num_speakers):
        base = truth.speaker_bases[spk]
        for emo in range(1, spec.num_emotions):
            direction = truth.emotion_directions[emo]
            for _ in range(spec.pairs_per_stratum):
                intensity = float(gen.uniform(lo, hi))
                clean_e = base + intensity * direction
                noise_e = spec.noise_sigma * gen.standard_normal((t, f))
                noise_n = spec.noise_sigma * gen.standard_normal((t, f))
                samples.append(SpeechSample(_frozen(clean_e + noise_e), spk, emo, intensity, pair_id))
                samples.append(SpeechSample(_frozen(base + noise_n), spk, NEUTRAL, 0.0, pair_id))
                pair_id += 1
    return samples, truth


def make_corpus(spec: CorpusSpec) -> Corpus:
    samples, truth = generate_corpus(spec)
    return Corpus(spec, samples, truth)


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _sample_meta(s: SpeechSample) -> dict:
    return {"speaker_id": s.speaker_id, "emotion_id": s.emotion_id,
            "intensity": s.intensity, "pair_id": s.pair_id}


def corpus_hash(spec: CorpusSpec, samples) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(spec.to_dict(), sort_keys=True).encode())
    for s in samples:
        h.update(json.dumps(_sample_meta(s), sort_keys=True).encode())
        h.update(tnsr.dumps(s.features))
    return h.hexdigest()


def split(corpus: Corpus, train_fraction: float, seed: int):
    """Pair-preserving split stratified by (speaker, emotion of the pair)."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie strictly between 0 and 1", fields=("train_fraction",))
    strata = defaultdict(list)
    for pid, (emo, _neu) in corpus.pairs().items():
        strata[(emo.speaker_id, emo.emotion_id)].append(pid)
    gen = rngmod.stream(seed, "split")
    train_ids = set()
    for key in sorted(strata):
        pids = strata[key]
        if len(pids) < 2:
            raise SplitError(f"stratum speaker={key[0]} emotion={key[1]} has {len(pids)} pair(s), need >= 2", key)
        order = gen.permutation(len(pids))
        n_train = min(max(int(round(train_fraction * len(pids))), 1), len(pids) - 1)
        train_ids.update(pids[i] for i in order[:n_train])
    train = [s for s in corpus.samples if s.pair_id in train_ids]
    held = [s for s in corpus.samples if s.pair_id not in train_ids]
    return corpus.subset(train), corpus.subset(held)


# --------------------------------------------------------------------------
# persistence


def save_corpus(corpus: Corpus, out_dir) -> list:
    """Write ``corpus.json``, one TNSR per sample and ``ground_truth.tnsr``.

    Returns the list of written paths.
    """
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    written = []
    entries = []
    for i, s in enumerate(corpus.samples):
        rel = f"samples/sample_{i:05d}.tnsr"
        tnsr.save(out / rel, s.features)
        written.append(out / rel)
        entries.append({"file": rel, **_sample_meta(s)})
    index = {id(s): i for i, s in enumerate(corpus.samples)}
    pairs = [{"pair_id": pid, "emotional": index[id(e)], "neutral": index[id(n)]}
             for pid, (e, n) in corpus.pairs().items()]
    meta = {
        "spec": corpus.spec.to_dict(),
        "corpus_hash": corpus.content_hash(),
        "samples": entries,
        "pairs": pairs,
    }
    if corpus.ground_truth is not None:
        gt = corpus.ground_truth
        tnsr.save(out / "ground_truth.tnsr", np.vstack([gt.speaker_bases, gt.emotion_directions]))
        written.append(out / "ground_truth.tnsr")
        meta["ground_truth"] = {"file": "ground_truth.tnsr",
                                "speaker_rows": int(gt.speaker_bases.shape[0]),
                                "emotion_rows": int(gt.emotion_directions.shape[0])}
    (out / "corpus.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    written.insert(0, out / "corpus.json")
    return written


def load_corpus(path) -> Corpus:
    root = Path(path)
    try:
        meta = json.loads((root / "corpus.json").read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no corpus.json under {root}", fields=("corpus",)) from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"corpus.json is not valid JSON: {exc}") from exc
    spec = CorpusSpec.from_dict(meta["spec"])
    samples = [
        SpeechSample(_frozen(tnsr.load(root / e["file"])), int(e["speaker_id"]), int(e["emotion_id"]),
                     float(e["intensity"]), int(e["pair_id"]))
        for e in meta["samples"]
    ]
    truth = None
    gt_meta = meta.get("ground_truth")
    if gt_meta and (root / gt_meta["file"]).exists():
        stacked = tnsr.load(root / gt_meta["file"])
        k = gt_meta["speaker_rows"]
        truth = GroundTruth(stacked[:k], stacked[k:])
    return Corpus(spec, samples, truth)
