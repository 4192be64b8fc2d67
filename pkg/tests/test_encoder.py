import numpy as np
import pytest

from mixencoder.encoder import (
    CLS,
    Encoder,
    SequenceTooLong,
    TokenSequence,
    Vocab,
    VocabError,
    embed,
    encode,
    pad_batch,
    pair_sequence,
    text_sequence,
    transformer_layer,
)
from mixencoder.numcore import RNG, Tensor

import oracles
from helpers import VOCAB, tokens, zero_


def make_encoder(layers=2, d=16, heads=2, seed=0):
    return Encoder(VOCAB, d, heads, layers, 32, 32, RNG(seed), np.float64)


def layer_oracle(x, mask, layer, heads):
    d = x.shape[-1]
    p = {k: v.data for k, v in layer.named_parameters()}
    h = oracles.layer_norm(x, p["ln1.gamma"], p["ln1.beta"])
    qkv = oracles.linear(h, p["qkv.weight"], p["qkv.bias"])
    att = oracles.attention(qkv[:, :d], qkv[:, d : 2 * d], qkv[:, 2 * d :], heads, mask)
    x1 = x + oracles.linear(att, p["attn_out.weight"], p["attn_out.bias"])
    h2 = oracles.layer_norm(x1, p["ln2.gamma"], p["ln2.beta"])
    return x1 + oracles.ffn(h2, p["ffn.fc1.weight"], p["ffn.fc1.bias"], p["ffn.fc2.weight"], p["ffn.fc2.bias"])


def test_vocab_reserved_ids_and_roundtrip(tmp_path):
    v = Vocab(["alpha", "beta"], kmax=3)
    assert v.tokens[:6] == ["[PAD]", "[CLS]", "[SEP]", "[S1]", "[S2]", "[S3]"]
    assert v.special_id(1) == 3 and v.special_id(3) == 5
    assert v.encode_words("beta alpha") == [7, 6]
    v.save(tmp_path / "vocab.tsv")
    assert (tmp_path / "vocab.tsv").read_text().splitlines()[6] == "alpha\t6"
    assert Vocab.load(tmp_path / "vocab.tsv") == v
    with pytest.raises(VocabError):
        v.encode_words("gamma")


def test_token_sequence_rejects_pad_before_real_token():
    with pytest.raises(ValueError):
        TokenSequence((1, 0, 5), (True, False, True))
    seq = TokenSequence.of([5, 6]).prepend([3])
    assert seq.ids == (3, 5, 6) and all(seq.mask)


def test_pair_sequence_layout():
    v = Vocab(["a", "b", "c"], kmax=1)
    pair = pair_sequence(text_sequence(v, "a b"), text_sequence(v, "c"))
    assert v.decode(pair.ids) == "[CLS] a b [SEP] c [SEP]"


def test_embed_cls_only_row():
    enc = make_encoder()
    out = embed(TokenSequence.of([CLS]), enc).data
    np.testing.assert_array_equal(out, (enc.tok_emb.data[CLS] + enc.pos_emb.data[0])[None])


def test_embed_position_changes_rows_and_matches_lookup():
    enc = make_encoder()
    out = embed(TokenSequence.of([1, 5, 7]), enc).data
    expect = np.stack([enc.tok_emb.data[i] + enc.pos_emb.data[p] for p, i in enumerate([1, 5, 7])])
    np.testing.assert_array_equal(out, expect)
    same = embed(TokenSequence.of([5, 5]), enc).data
    assert not np.array_equal(same[0], same[1])


def test_embed_errors():
    enc = make_encoder()
    with pytest.raises(VocabError):
        enc.embed(np.array([[1, VOCAB]]))
    with pytest.raises(SequenceTooLong):
        enc.embed(np.ones((1, 33), dtype=np.int64))
    with pytest.raises(SequenceTooLong):
        pad_batch([TokenSequence.of([1, 2, 3])], length=2)


def test_transformer_layer_matches_oracle():
    enc = make_encoder(layers=1)
    rng = np.random.default_rng(3)
    for a in range(3):
        x = rng.normal(size=(6, 16))
        mask = np.array([True] * (6 - a) + [False] * a)
        got = transformer_layer(Tensor(x), mask, enc.layers[0]).data
        want = layer_oracle(x, mask, enc.layers[0], heads=2)
        assert np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-6)) <= 1e-5


def test_zeroed_output_projections_give_identity():
    enc = make_encoder(layers=1)
    layer = enc.layers[0]
    zero_(layer.attn_out.weight, layer.attn_out.bias, layer.ffn.fc2.weight, layer.ffn.fc2.bias)
    x = np.random.default_rng(0).normal(size=(5, 16))
    np.testing.assert_array_equal(layer(Tensor(x)).data, x)


def test_padding_values_never_reach_real_rows():
    enc = make_encoder(layers=2)
    rng = np.random.default_rng(5)
    ids, mask = tokens(rng, 4, 9, min_len=3)
    other = ids.copy()
    other[~mask] = rng.integers(13, VOCAB, (~mask).sum())
    a = enc.encode(ids, mask).data
    b = enc.encode(other, mask).data
    np.testing.assert_array_equal(a[mask], b[mask])


def test_encode_composition_zero_layers_and_determinism():
    rng = np.random.default_rng(8)
    ids, mask = tokens(rng, 1, 7)
    enc = make_encoder(layers=2)
    seq = TokenSequence(tuple(ids[0]), tuple(mask[0]))
    x = enc.embed(ids[0]).data
    for layer in enc.layers:
        x = layer_oracle(x, mask[0], layer, heads=2)
    got = encode(seq, enc).data
    assert np.max(np.abs(got - x) / np.maximum(np.abs(x), 1e-6)) <= 1e-5
    np.testing.assert_array_equal(encode(seq, make_encoder(layers=2)).data, got)
    np.testing.assert_array_equal(encode(seq, make_encoder(layers=0)).data, enc.embed(ids[0]).data)
    np.testing.assert_array_equal(encode(seq, enc, upto=0).data, enc.embed(ids[0]).data)
