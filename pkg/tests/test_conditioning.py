import math

import numpy as np
import pytest

from emocond import numcore as nc
from emocond.conditioning import (
    CrossAttention, TokenEncoder, TokenSequence, attention_weights, cross_attend, cross_attend_batch,
    encode_token_batch, encode_tokens, pooling_matrix,
)
from emocond.errors import DimensionError, InvalidMaskError, VocabError

D = 4


@pytest.fixture
def enc():
    return TokenEncoder.init(vocab=10, max_len=8, dim=D, gen=np.random.default_rng(0))


@pytest.fixture
def ca():
    return CrossAttention.init(D, np.random.default_rng(1))


def test_single_token_is_value_path(enc):
    out = encode_tokens(enc, TokenSequence([3], [True])).data
    x = enc.embedding.data[3] + enc.positional.data[0]
    np.testing.assert_allclose(out, [x + x @ enc.W_v.data], atol=1e-12)


def test_pad_tokens_do_not_leak(enc):
    a = TokenSequence([1, 2, 7, 8, 9], [True, True, False, False, False])
    b = TokenSequence([1, 2, 9, 0, 4], [True, True, False, False, False])
    np.testing.assert_allclose(encode_tokens(enc, a).data[:2], encode_tokens(enc, b).data[:2], atol=1e-9)


def test_encode_tokens_deterministic(enc):
    seq = TokenSequence([1, 5, 2], [True, True, True])
    assert encode_tokens(enc, seq).data.tobytes() == encode_tokens(enc, seq).data.tobytes()


def test_vocab_error(enc):
    with pytest.raises(VocabError):
        encode_tokens(enc, TokenSequence([10], [True]))


def test_token_sequence_needs_real_token():
    with pytest.raises(InvalidMaskError):
        TokenSequence([1, 2], [False, False])


def test_batch_encoding_matches_single(enc):
    ids = np.array([[1, 2, 3], [4, 5, 0]])
    mask = np.array([[True, True, True], [True, True, False]])
    stacked = encode_token_batch(enc, ids, mask).data
    for i in range(2):
        single = encode_tokens(enc, TokenSequence(ids[i], mask[i])).data
        np.testing.assert_allclose(stacked[3 * i:3 * i + 3][mask[i]], single[mask[i]], atol=1e-12)


def test_pooling_matrix_averages_real_rows():
    mask = np.array([[True, False], [True, True]])
    np.testing.assert_allclose(pooling_matrix(mask), [[1, 0, 0, 0], [0, 0, 0.5, 0.5]])


def test_cross_attend_single_key(ca):
    h = np.random.default_rng(2).normal(size=(1, D))
    out = cross_attend(ca, np.ones(D), h).data
    np.testing.assert_allclose(out, h + h @ ca.W_v.data, atol=1e-12)


def test_zero_query_projection_gives_uniform_attention(ca):
    zero = CrossAttention(nc.tensor(np.zeros((D, D))), ca.W_k, ca.W_v)
    h = np.random.default_rng(3).normal(size=(5, D))
    mask = np.array([True, False, True, True, False])
    w = attention_weights(zero, np.arange(D, dtype=float), h, mask)
    np.testing.assert_allclose(w, [[1 / 3, 0, 1 / 3, 1 / 3, 0]], atol=1e-15)
    out = cross_attend(zero, np.arange(D, dtype=float), h, mask).data
    context = (h @ ca.W_v.data)[mask].mean(axis=0)
    np.testing.assert_allclose(out, h + context, atol=1e-12)
    other = cross_attend(zero, -7.0 * np.ones(D), h, mask).data
    np.testing.assert_array_equal(out, other)


def test_cross_attend_two_tokens_by_hand():
    Wq = nc.tensor(np.eye(2))
    Wk = nc.tensor(np.eye(2))
    Wv = nc.tensor([[1.0, 0.0], [0.0, 2.0]])
    ca = CrossAttention(Wq, Wk, Wv)
    e = np.array([1.0, 0.0])
    h = np.array([[2.0, 0.0], [0.0, 1.0]])
    logits = np.array([2.0, 0.0]) / math.sqrt(2)
    w = np.exp(logits) / np.exp(logits).sum()
    context = w[0] * np.array([2.0, 0.0]) + w[1] * np.array([0.0, 2.0])
    np.testing.assert_allclose(cross_attend(ca, e, h).data, h + context, atol=1e-10)


def test_cross_attend_all_pad_rejected(ca):
    with pytest.raises(InvalidMaskError):
        cross_attend(ca, np.ones(D), np.ones((3, D)), [False, False, False])


def test_cross_attend_shape_errors(ca):
    with pytest.raises(DimensionError):
        cross_attend(ca, np.ones(D + 1), np.ones((3, D)))


@pytest.mark.parametrize("per_token", [False, True])
def test_output_shape_is_sequence_shape(ca, per_token):
    h = np.random.default_rng(4).normal(size=(6, D))
    assert cross_attend(ca, np.ones(D), h, None, per_token).shape == (6, D)


def test_query_per_token_agrees_with_single_query(ca):
    g = np.random.default_rng(5)
    h, e = g.normal(size=(5, D)), g.normal(size=D)
    mask = [True, True, False, True, True]
    np.testing.assert_allclose(cross_attend(ca, e, h, mask, True).data, cross_attend(ca, e, h, mask).data, atol=1e-12)


@pytest.mark.parametrize("per_token", [False, True])
def test_batched_cross_attend_matches_single(ca, per_token):
    g = np.random.default_rng(6)
    E = g.normal(size=(3, D))
    H = g.normal(size=(3 * 4, D))
    mask = np.array([[1, 1, 1, 0], [1, 0, 0, 0], [1, 1, 1, 1]], dtype=bool)
    out = cross_attend_batch(ca, nc.tensor(E), nc.tensor(H), mask, per_token).data
    for i in range(3):
        single = cross_attend(ca, E[i], H[4 * i:4 * i + 4], mask[i]).data
        np.testing.assert_allclose(out[4 * i:4 * i + 4], single, atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cross_attend_gradients(seed):
    g = np.random.default_rng(seed)
    mask = np.array([True, True, False, True])
    weights = g.normal(size=(4, D))

    def f(e, wq, wk, wv, h):
        return nc.sum(cross_attend(CrossAttention(wq, wk, wv), e, h, mask) * weights)

    args = [g.normal(size=D), g.normal(size=(D, D)), g.normal(size=(D, D)), g.normal(size=(D, D)), g.normal(size=(4, D))]
    assert nc.grad_check(f, args) < 1e-4


def test_token_encoder_gradients(enc):
    ids = np.array([[1, 2, 3], [4, 5, 0]])
    mask = np.array([[True, True, True], [True, True, False]])

    def f(emb, pos, wq, wk, wv):
        out = encode_token_batch(TokenEncoder(emb, pos, wq, wk, wv), ids, mask)
        return nc.sum(nc.tanh(nc.matmul(nc.tensor(pooling_matrix(mask)), out)))

    assert nc.grad_check(f, [p.data for p in enc.parameters()]) < 1e-4
