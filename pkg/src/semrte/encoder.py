"""Deterministic subword tokenizer plus a small trainable transformer encoder.

Words are chunked into fixed-width character pieces (continuations carry a
"##" prefix), which guarantees multi-subword words so the word-alignment
layer downstream is genuinely exercised. The encoder itself is a pre-norm
self-attention stack producing one contextual vector per subword.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .corpus import PremisePair
from .errors import ConfigError, DataError

CLS_ID = 1
SEP_ID = 2
PAD_ID = 3
UNK_ID = 4
FIRST_PIECE_ID = 5
CONTINUATION = "##"


@dataclass(frozen=True)
class SubwordVocab:
    """piece -> id map; ids 1..4 are CLS/SEP/PAD/UNK, 0 is unused."""

    piece_to_id: dict[str, int]
    chunk_size: int

    @property
    def size(self) -> int:
        return FIRST_PIECE_ID + len(self.piece_to_id)

    def id(self, piece: str) -> int:
        return self.piece_to_id.get(piece, UNK_ID)

    def save(self, path) -> None:
        ordered = sorted(self.piece_to_id, key=self.piece_to_id.__getitem__)
        with open(path, "w", encoding="utf-8") as fh:
            for piece in ordered:
                fh.write(piece + "\n")

    @classmethod
    def load(cls, path, chunk_size: int) -> "SubwordVocab":
        piece_to_id = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                piece = line.rstrip("\n")
                if not piece:
                    raise DataError(f"{path}: empty vocab line {lineno}")
                piece_to_id[piece] = lineno + FIRST_PIECE_ID - 1
        return cls(piece_to_id=piece_to_id, chunk_size=chunk_size)


def chunk_word(word: str, chunk_size: int) -> list[str]:
    """Partition a word into chunk_size-character pieces, '##'-marking
    continuations."""
    if not word:
        raise DataError("cannot chunk an empty word")
    if chunk_size < 1:
        raise ConfigError(f"chunk_size must be >= 1, got {chunk_size}")
    pieces = [word[i : i + chunk_size] for i in range(0, len(word), chunk_size)]
    return [pieces[0]] + [CONTINUATION + p for p in pieces[1:]]


def build_vocab(corpus_tokens, chunk_size: int) -> SubwordVocab:
    """Collect every chunk the corpus produces; ids follow sorted order."""
    pieces = set()
    for word in corpus_tokens:
        pieces.update(chunk_word(word, chunk_size))
    piece_to_id = {
        piece: FIRST_PIECE_ID + rank for rank, piece in enumerate(sorted(pieces))
    }
    return SubwordVocab(piece_to_id=piece_to_id, chunk_size=chunk_size)


@dataclass(frozen=True)
class TokenizedInput:
    """Subword ids for one joined pair plus per-word span bookkeeping.

    `word_spans[w] = (first, last)` subword indices of word position w in
    the joined [CLS] text1 [SEP] text2 [SEP] sequence; specials are their
    own single-subword words. `keep1`/`keep2` are the word counts each side
    retained after truncation.
    """

    subword_ids: tuple[int, ...]
    word_spans: tuple[tuple[int, int], ...]
    keep1: int
    keep2: int

    @property
    def num_words(self) -> int:
        return len(self.word_spans)


def tokenize_pair(pair: PremisePair, vocab: SubwordVocab, max_length: int = 256) -> TokenizedInput:
    """Tokenize a pair into the joined subword layout with word spans.

    Truncation to `max_length` happens at word boundaries, repeatedly
    dropping the last word of whichever side currently holds more subwords
    (ties: text2). Each side always keeps at least one word.
    """
    pieces1 = [chunk_word(w, vocab.chunk_size) for w in pair.text1]
    pieces2 = [chunk_word(w, vocab.chunk_size) for w in pair.text2]
    keep1, keep2 = len(pieces1), len(pieces2)
    count1 = sum(len(p) for p in pieces1)
    count2 = sum(len(p) for p in pieces2)
    while 3 + count1 + count2 > max_length:
        # Longest side loses its last word; ties go to text2. A side is
        # never cut below one word.
        from_first = (count1 > count2 and keep1 > 1) or keep2 <= 1
        if from_first and keep1 > 1:
            keep1 -= 1
            count1 -= len(pieces1[keep1])
        elif keep2 > 1:
            keep2 -= 1
            count2 -= len(pieces2[keep2])
        else:
            raise DataError(
                f"pair {pair.id!r} cannot fit max_length={max_length} even at "
                "one word per side"
            )

    ids = [CLS_ID]
    spans = [(0, 0)]
    for side in (pieces1[:keep1], pieces2[:keep2]):
        for word_pieces in side:
            start = len(ids)
            ids.extend(vocab.id(p) for p in word_pieces)
            spans.append((start, len(ids) - 1))
        sep_pos = len(ids)
        ids.append(SEP_ID)
        spans.append((sep_pos, sep_pos))
    return TokenizedInput(
        subword_ids=tuple(ids),
        word_spans=tuple(spans),
        keep1=keep1,
        keep2=keep2,
    )


@dataclass
class EncoderConfig:
    d_model: int = 64
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    max_length: int = 256
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("d_model", "layers", "heads", "ffn_dim", "max_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"EncoderConfig.{name} must be positive")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by heads={self.heads}"
            )
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_json_dict(self) -> dict:
        return {
            "d_model": self.d_model,
            "layers": self.layers,
            "heads": self.heads,
            "ffn_dim": self.ffn_dim,
            "max_length": self.max_length,
            "dropout": self.dropout,
            "seed": self.seed,
        }


def trunc_normal_(tensor: torch.Tensor, std: float, generator: torch.Generator) -> None:
    """normal(0, std) truncated at +/-2 sigma via inverse-CDF sampling."""
    low = 0.5 * (1.0 + math.erf(-2.0 / math.sqrt(2.0)))
    tensor.uniform_(low, 1.0 - low, generator=generator)
    tensor.mul_(2.0).sub_(1.0).erfinv_().mul_(math.sqrt(2.0) * std)


def init_parameters(module: nn.Module, seed: int) -> None:
    """Seeded init over registration order: weights ~ normal(0, 0.02)
    truncated at 2 sigma, biases zero, layer-norm gains one."""
    generator = torch.Generator().manual_seed(seed)
    for name, param in module.named_parameters():
        with torch.no_grad():
            if param.dim() >= 2:
                trunc_normal_(param, std=0.02, generator=generator)
            elif name.endswith(".gain") or name == "gain":
                param.fill_(1.0)
            else:
                param.zero_()


class LayerNorm(nn.Module):
    """Last-dim layer normalization with learnable gain and bias."""

    def __init__(self, width: int, dtype=torch.float32):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(width, dtype=dtype))
        self.bias = nn.Parameter(torch.zeros(width, dtype=dtype))
        self.eps = 1e-5

    def forward(self, x):
        mean = x.mean(dim=-1, keepdim=True)
        var = x.var(dim=-1, unbiased=False, keepdim=True)
        return (x - mean) / torch.sqrt(var + self.eps) * self.gain + self.bias


class SelfAttention(nn.Module):
    """Multi-head scaled dot-product self-attention with key padding mask."""

    def __init__(self, d_model: int, heads: int, dtype=torch.float32):
        super().__init__()
        self.heads = heads
        self.head_dim = d_model // heads
        self.wq = nn.Parameter(torch.empty(d_model, d_model, dtype=dtype))
        self.wk = nn.Parameter(torch.empty(d_model, d_model, dtype=dtype))
        self.wv = nn.Parameter(torch.empty(d_model, d_model, dtype=dtype))
        self.wo = nn.Parameter(torch.empty(d_model, d_model, dtype=dtype))
        self.bq = nn.Parameter(torch.zeros(d_model, dtype=dtype))
        self.bk = nn.Parameter(torch.zeros(d_model, dtype=dtype))
        self.bv = nn.Parameter(torch.zeros(d_model, dtype=dtype))
        self.bo = nn.Parameter(torch.zeros(d_model, dtype=dtype))
        init_parameters(self, 0)

    def forward(self, x, key_mask):
        # x: [B, S, D]; key_mask: [B, S] True where the position is real.
        batch, seq, d_model = x.shape
        def split(t):
            return t.view(batch, seq, self.heads, self.head_dim).transpose(1, 2)

        q = split(x @ self.wq + self.bq)
        k = split(x @ self.wk + self.bk)
        v = split(x @ self.wv + self.bv)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        blocked = ~key_mask[:, None, None, :]
        scores = scores.masked_fill(blocked, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        mixed = (weights @ v).transpose(1, 2).reshape(batch, seq, d_model)
        return mixed @ self.wo + self.bo


class FeedForward(nn.Module):
    """Two-layer position-wise feed-forward with GELU."""

    def __init__(self, d_model: int, ffn_dim: int, dtype=torch.float32):
        super().__init__()
        self.w1 = nn.Parameter(torch.empty(d_model, ffn_dim, dtype=dtype))
        self.b1 = nn.Parameter(torch.zeros(ffn_dim, dtype=dtype))
        self.w2 = nn.Parameter(torch.empty(ffn_dim, d_model, dtype=dtype))
        self.b2 = nn.Parameter(torch.zeros(d_model, dtype=dtype))
        init_parameters(self, 0)

    def forward(self, x):
        hidden = x @ self.w1 + self.b1
        hidden = 0.5 * hidden * (1.0 + torch.erf(hidden / math.sqrt(2.0)))
        return hidden @ self.w2 + self.b2


class EncoderBlock(nn.Module):
    """Pre-norm residual block: x += attn(LN(x)); x += ffn(LN(x))."""

    def __init__(self, cfg: EncoderConfig, dtype=torch.float32):
        super().__init__()
        self.ln1 = LayerNorm(cfg.d_model, dtype=dtype)
        self.attn = SelfAttention(cfg.d_model, cfg.heads, dtype=dtype)
        self.ln2 = LayerNorm(cfg.d_model, dtype=dtype)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, dtype=dtype)
        self.dropout = cfg.dropout

    def forward(self, x, key_mask, training: bool):
        attn_out = self.attn(self.ln1(x), key_mask)
        x = x + torch.dropout(attn_out, self.dropout, training)
        ffn_out = self.ffn(self.ln2(x))
        return x + torch.dropout(ffn_out, self.dropout, training)


class ContextEncoder(nn.Module):
    """Token + learned positional embeddings into a pre-norm block stack."""

    def __init__(self, vocab_size: int, cfg: EncoderConfig, dtype=torch.float32):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.tok_embed = nn.Parameter(torch.empty(vocab_size, cfg.d_model, dtype=dtype))
        self.pos_embed = nn.Parameter(torch.empty(cfg.max_length, cfg.d_model, dtype=dtype))
        self.blocks = nn.ModuleList(
            EncoderBlock(cfg, dtype=dtype) for _ in range(cfg.layers)
        )
        init_parameters(self, cfg.seed)

    def forward(self, subword_ids, lengths, training: bool = False):
        """Encode a padded id batch into per-subword vectors.

        subword_ids: [B, S] long; lengths: [B] long. Positions at or beyond
        a row's length are padding and are masked out of attention.
        """
        if int(subword_ids.max()) >= self.vocab_size:
            raise DataError(
                f"subword id {int(subword_ids.max())} >= vocab size {self.vocab_size}"
            )
        batch, seq = subword_ids.shape
        if seq > self.cfg.max_length:
            raise DataError(f"sequence length {seq} exceeds max_length {self.cfg.max_length}")
        key_mask = torch.arange(seq, device=subword_ids.device)[None, :] < lengths[:, None]
        x = self.tok_embed[subword_ids] + self.pos_embed[:seq][None, :, :]
        x = torch.dropout(x, self.cfg.dropout, training)
        for block in self.blocks:
            x = block(x, key_mask, training)
        return x
