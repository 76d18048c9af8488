import math
import random

import numpy as np
import pytest
import torch

from semrte.aspects import cap_and_pad, fallback_aspect_set, pair_aspects
from semrte.corpus import LabelInventory, PremisePair
from semrte.encoder import (
    CLS_ID,
    PAD_ID,
    SEP_ID,
    UNK_ID,
    ContextEncoder,
    EncoderConfig,
    SelfAttention,
    SubwordVocab,
    build_vocab,
    chunk_word,
    tokenize_pair,
)
from semrte.errors import ConfigError, DataError

INV = LabelInventory.from_roles(["V"])


def test_chunk_word_examples():
    assert chunk_word("rises", 3) == ["ris", "##es"]
    assert chunk_word("up", 3) == ["up"]
    assert chunk_word("abcdefg", 3) == ["abc", "##def", "##g"]


def test_chunk_word_errors():
    with pytest.raises(DataError):
        chunk_word("", 3)
    with pytest.raises(ConfigError):
        chunk_word("abc", 0)


def test_build_vocab_simple():
    vocab = build_vocab(["sun"], 3)
    assert vocab.piece_to_id == {"sun": 5}
    assert vocab.size == 6


def test_build_vocab_chunked():
    vocab = build_vocab(["hello"], 3)
    assert set(vocab.piece_to_id) == {"hel", "##lo"}


def test_build_vocab_deterministic():
    words = ["hello", "world", "sun", "rises"]
    assert build_vocab(words, 3) == build_vocab(list(reversed(words)), 3)


def test_vocab_save_load(tmp_path):
    vocab = build_vocab(["hello", "sun", "up"], 3)
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    assert SubwordVocab.load(path, 3) == vocab
    # one piece per line, id = line number + 4
    lines = path.read_text().splitlines()
    assert vocab.piece_to_id[lines[0]] == 5
    assert vocab.piece_to_id[lines[-1]] == len(lines) + 4


def _pair(text1, text2):
    return PremisePair(id="p", text1=tuple(text1), text2=tuple(text2), label="agree", lang="eng")


def test_tokenize_pair_layout():
    vocab = build_vocab(["sun", "rises", "up"], 3)
    tok = tokenize_pair(_pair(["sun", "rises"], ["sun", "up"]), vocab)
    sun, ris, es, up = (vocab.piece_to_id[p] for p in ("sun", "ris", "##es", "up"))
    assert tok.subword_ids == (CLS_ID, sun, ris, es, SEP_ID, sun, up, SEP_ID)
    assert tok.word_spans == ((0, 0), (1, 1), (2, 3), (4, 4), (5, 5), (6, 6), (7, 7))
    assert (tok.keep1, tok.keep2) == (2, 2)


def test_tokenize_single_chunk_words_have_width_one_spans():
    vocab = build_vocab(["a", "bb", "cc"], 3)
    tok = tokenize_pair(_pair(["a", "bb"], ["cc"]), vocab)
    assert all(s == e for s, e in tok.word_spans)


def test_tokenize_unknown_piece_maps_to_unk():
    vocab = build_vocab(["sun"], 3)
    tok = tokenize_pair(_pair(["sun"], ["moon"]), vocab)
    assert tok.subword_ids[3] == UNK_ID


def test_tokenize_truncates_longer_side_at_word_boundary():
    vocab = build_vocab(["aaa", "bb", "c"], 3)
    # subwords: text1 = 5 words * 1 piece, text2 = 2 pieces; 3 specials
    pair = _pair(["aaa"] * 5, ["bb", "c"])
    tok = tokenize_pair(pair, vocab, max_length=8)
    assert tok.keep1 == 3  # dropped two words from the longer side
    assert tok.keep2 == 2
    assert len(tok.subword_ids) == 8
    # spans still tile the sequence contiguously
    flat = [i for s, e in tok.word_spans for i in range(s, e + 1)]
    assert flat == list(range(len(tok.subword_ids)))


def test_tokenize_error_when_single_words_do_not_fit():
    vocab = build_vocab(["abcdefghi"], 3)
    with pytest.raises(DataError, match="cannot fit"):
        tokenize_pair(_pair(["abcdefghi"], ["abcdefghi"]), vocab, max_length=4)


def test_alignment_word_count_matches_grid_width():
    rng = random.Random(59)
    words = ["sun", "rises", "moonlight", "up", "over", "a", "bb"]
    vocab = build_vocab(words, 3)
    for _ in range(100):
        n1 = rng.randint(1, 6)
        n2 = rng.randint(1, 6)
        pair = _pair(
            [rng.choice(words) for _ in range(n1)],
            [rng.choice(words) for _ in range(n2)],
        )
        max_length = rng.randint(7, 30)
        try:
            tok = tokenize_pair(pair, vocab, max_length=max_length)
        except DataError:
            continue
        m = rng.randint(1, 3)
        a1 = cap_and_pad(fallback_aspect_set("p.1", pair.text1), m)
        a2 = cap_and_pad(fallback_aspect_set("p.2", pair.text2), m)
        grid = pair_aspects(pair, a1, a2, m, INV, keep1=tok.keep1, keep2=tok.keep2)
        assert len(grid[0]) == tok.num_words


def _lengths(ids: torch.Tensor) -> torch.Tensor:
    return torch.full((ids.shape[0],), ids.shape[1], dtype=torch.long)


def test_encode_zero_weights_is_embedding_plus_position():
    cfg = EncoderConfig(d_model=8, layers=1, heads=2, ffn_dim=16, max_length=16, seed=3)
    enc = ContextEncoder(vocab_size=12, cfg=cfg)
    with torch.no_grad():
        for name, p in enc.named_parameters():
            if "tok_embed" in name or "pos_embed" in name or name.endswith(".gain"):
                continue
            p.zero_()
    ids = torch.tensor([[1, 5, 7, 2]])
    out = enc(ids, _lengths(ids))
    expected = enc.tok_embed[ids] + enc.pos_embed[:4][None]
    assert torch.allclose(out, expected)


def test_encode_batch_permutation():
    cfg = EncoderConfig(d_model=8, layers=2, heads=2, ffn_dim=16, max_length=16, seed=5)
    enc = ContextEncoder(vocab_size=12, cfg=cfg)
    ids = torch.tensor([[1, 5, 2, PAD_ID], [1, 7, 8, 2], [1, 9, 2, PAD_ID]])
    lengths = torch.tensor([3, 4, 3])
    out = enc(ids, lengths)
    perm = torch.tensor([2, 0, 1])
    out_perm = enc(ids[perm], lengths[perm])
    assert torch.allclose(out[perm], out_perm, atol=1e-6)


def test_single_token_attention_matches_formula_oracle():
    torch.manual_seed(11)
    d_model, heads = 8, 2
    attn = SelfAttention(d_model, heads, dtype=torch.float64)
    with torch.no_grad():
        for p in attn.parameters():
            p.normal_(0, 0.5)
    x = torch.randn(1, 1, d_model, dtype=torch.float64)
    got = attn(x, torch.ones(1, 1, dtype=torch.bool)).detach().numpy()[0, 0]

    # oracle: softmax(q k^T / sqrt(dh)) v per head, then the output projection
    xn = x.numpy()[0, 0]
    q = xn @ attn.wq.detach().numpy() + attn.bq.detach().numpy()
    k = xn @ attn.wk.detach().numpy() + attn.bk.detach().numpy()
    v = xn @ attn.wv.detach().numpy() + attn.bv.detach().numpy()
    dh = d_model // heads
    mixed = np.zeros(d_model)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        score = float(q[sl] @ k[sl]) / math.sqrt(dh)
        weight = math.exp(score) / math.exp(score)  # softmax over one key
        mixed[sl] = weight * v[sl]
    expected = mixed @ attn.wo.detach().numpy() + attn.bo.detach().numpy()
    assert np.allclose(got, expected, atol=1e-12)


def test_pad_invariance():
    cfg = EncoderConfig(d_model=8, layers=2, heads=2, ffn_dim=16, max_length=16, seed=7)
    enc = ContextEncoder(vocab_size=12, cfg=cfg)
    ids_a = torch.tensor([[1, 5, 2, PAD_ID, PAD_ID]])
    ids_b = torch.tensor([[1, 5, 2, 9, 7]])  # junk ids at padded positions
    lengths = torch.tensor([3])
    out_a = enc(ids_a, lengths)
    out_b = enc(ids_b, lengths)
    assert torch.equal(out_a[:, :3], out_b[:, :3])


def test_encode_id_overflow():
    cfg = EncoderConfig(d_model=8, layers=1, heads=2, ffn_dim=16, max_length=8, seed=0)
    enc = ContextEncoder(vocab_size=6, cfg=cfg)
    with pytest.raises(DataError, match="vocab size"):
        enc(torch.tensor([[1, 6]]), torch.tensor([2]))


def test_encoder_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(d_model=10, heads=4)
    with pytest.raises(ConfigError):
        EncoderConfig(layers=0)
