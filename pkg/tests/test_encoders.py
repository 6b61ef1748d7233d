import math

import numpy as np
import pytest

from emocond import numcore as nc
from emocond import rng
from emocond.encoders import (
    Encoder, aggregate_emotion, cosine, emotion_direction, encode, extract_emotion, planted_image,
)
from emocond.errors import DegeneratePairError, DimensionError, InsufficientPairsError
from emocond.synthdata import CorpusSpec, make_corpus


def identity_encoder(d):
    return Encoder(nc.Tensor(np.eye(d)), frozen=True)


def test_encode_constant_features():
    c = np.array([0.3, -1.0, 2.0])
    out = encode(identity_encoder(3), np.tile(c, (5, 1)))
    np.testing.assert_allclose(out.data, c)


def test_encode_mean_pools():
    out = encode(identity_encoder(2), np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(out.data, [0.5, 0.5])


def test_encode_matches_loop_oracle():
    g = np.random.default_rng(0)
    feats, w = g.normal(size=(6, 5)), g.normal(size=(5, 3))
    expected = np.zeros(3)
    for d in range(3):
        for f in range(5):
            expected[d] += sum(feats[t, f] for t in range(6)) / 6 * w[f, d]
    np.testing.assert_allclose(encode(Encoder(w, frozen=True), feats).data, expected, atol=1e-12, rtol=0)


def test_encode_dimension_mismatch():
    with pytest.raises(DimensionError):
        encode(identity_encoder(3), np.ones((2, 4)))


def test_trainable_encoder_is_differentiable():
    enc = Encoder.trainable(4, 2, np.random.default_rng(1))
    feats = np.random.default_rng(2).normal(size=(3, 4))
    err = nc.grad_check(lambda w: nc.sum(nc.square(encode(Encoder(w), feats))), enc.projection.data)
    assert err < 1e-8


def test_frozen_encoder_has_no_grad():
    enc = Encoder.orthonormal(6, 3, np.random.default_rng(0))
    assert not enc.projection.requires_grad
    np.testing.assert_allclose(enc.projection.data.T @ enc.projection.data, np.eye(3), atol=1e-12)


def test_emotion_direction_cases():
    np.testing.assert_array_equal(emotion_direction([2.0, 0.0], [1.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(emotion_direction([1.0, 1.0], [0.0, 0.0]), [math.sqrt(2) / 2] * 2, atol=1e-15)
    with pytest.raises(DegeneratePairError):
        emotion_direction([1.0, 2.0], [1.0, 2.0])


def test_emotion_direction_is_unit():
    g = np.random.default_rng(3)
    for _ in range(100):
        v = emotion_direction(g.normal(size=7), g.normal(size=7))
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12


def test_aggregate_hand_cases():
    e = aggregate_emotion([([2.0, 0.0], [1.0, 0.0])], n=1)
    np.testing.assert_array_equal(e.vector, [1.0, 0.0])
    e = aggregate_emotion([([1.0, 0.0], [0.0, 0.0]), ([0.0, 3.0], [0.0, 0.0])], n=2)
    np.testing.assert_array_equal(e.vector, [0.5, 0.5])
    assert e.num_pairs == 2


def test_aggregate_skips_degenerate_pairs():
    pairs = [([1.0, 1.0], [1.0, 1.0]), ([2.0, 0.0], [0.0, 0.0]), ([0.0, 2.0], [0.0, 0.0])]
    e = aggregate_emotion(pairs, n=2)
    np.testing.assert_array_equal(e.vector, [0.5, 0.5])
    assert e.skipped == 1 and e.pair_ids == [1, 2]


def test_aggregate_insufficient_pairs():
    with pytest.raises(InsufficientPairsError) as info:
        aggregate_emotion([([1.0, 1.0], [1.0, 1.0]), ([2.0, 0.0], [0.0, 0.0])], n=2)
    assert info.value.usable == 1


def test_aggregate_permutation_invariant():
    g = np.random.default_rng(4)
    pairs = [(g.normal(size=5), g.normal(size=5)) for _ in range(6)]
    a = aggregate_emotion(pairs, n=6).vector
    b = aggregate_emotion([pairs[i] for i in g.permutation(6)], n=6).vector
    np.testing.assert_allclose(a, b, atol=1e-15)
    assert np.linalg.norm(a) <= 1.0


def test_noiseless_recovery_default_n():
    corpus = make_corpus(CorpusSpec(noise_sigma=0.0, seed=21, pairs_per_stratum=12))
    enc = Encoder.orthonormal(corpus.spec.feature_dim, corpus.spec.embed_dim, rng.stream(21, "init"))
    for k in range(1, corpus.spec.num_emotions):
        emb = extract_emotion(enc, corpus, k)
        assert emb.num_pairs == 10
        image = planted_image(enc, corpus.ground_truth.emotion_directions[k])
        assert cosine(emb.vector, image) >= 0.999


def test_recovery_non_decreasing_in_n():
    means = np.zeros(10)
    for seed in range(50):
        corpus = make_corpus(CorpusSpec(noise_sigma=0.1, seed=seed, pairs_per_stratum=10))
        enc = Encoder.orthonormal(32, 16, rng.stream(seed, "init"))
        image = planted_image(enc, corpus.ground_truth.emotion_directions[1])
        for n in range(1, 11):
            means[n - 1] += cosine(extract_emotion(enc, corpus, 1, n).vector, image) / 50
    assert np.all(np.diff(means) >= 0), means
