"""Fusing contextual word vectors with GRU-encoded role-label sequences.

The pipeline per example: subword vectors are pooled to word level through
a per-word CNN (windows never cross word boundaries), each of the m aspect
rows runs through a shared label-embedding + bidirectional GRU, the m
per-word outputs are concatenated and projected, context and semantics are
concatenated per word, and the joined vector at the CLS position feeds a
3-way softmax classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .encoder import ContextEncoder, EncoderConfig, init_parameters
from .errors import ConfigError, DataError


@dataclass
class FusionConfig:
    label_embed_dim: int = 16
    gru_hidden: int = 16
    sem_proj_dim: int = 32
    cnn_kernel_width: int = 3
    num_aspects: int = 2
    num_classes: int = 3

    def __post_init__(self):
        for name in (
            "label_embed_dim",
            "gru_hidden",
            "sem_proj_dim",
            "cnn_kernel_width",
            "num_aspects",
            "num_classes",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"FusionConfig.{name} must be positive")
        if not (1 <= self.num_aspects <= 5):
            raise ConfigError(
                f"num_aspects must be in [1, 5], got {self.num_aspects}"
            )

    def to_json_dict(self) -> dict:
        return {
            "label_embed_dim": self.label_embed_dim,
            "gru_hidden": self.gru_hidden,
            "sem_proj_dim": self.sem_proj_dim,
            "cnn_kernel_width": self.cnn_kernel_width,
            "num_aspects": self.num_aspects,
            "num_classes": self.num_classes,
        }


class WordAligner(nn.Module):
    """Subword-to-word pooling: per-word 1-D conv then max over positions.

    The convolution runs over each word's own subword vectors with zero
    padding at the word edges, so windows never see a neighboring word.
    """

    def __init__(self, d_model: int, kernel_width: int, dtype=torch.float32):
        super().__init__()
        self.kernel_width = kernel_width
        self.weight = nn.Parameter(
            torch.empty(d_model, d_model, kernel_width, dtype=dtype)
        )
        self.bias = nn.Parameter(torch.zeros(d_model, dtype=dtype))
        init_parameters(self, 0)

    def forward(self, subword_vecs, word_spans, word_mask):
        """Pool [B, S, D] subword vectors into [B, W, D] word vectors.

        word_spans: [B, W, 2] inclusive subword index ranges; word_mask:
        [B, W] True for real words. Masked rows come out as zeros.
        """
        batch, seq, d_model = subword_vecs.shape
        _, n_words, _ = word_spans.shape
        starts = word_spans[..., 0]
        span_len = torch.where(
            word_mask, word_spans[..., 1] - starts + 1, torch.zeros_like(starts)
        )
        if bool((span_len[word_mask] < 1).any()):
            raise DataError("empty word span")
        max_span = int(span_len.max().clamp(min=1))

        offsets = torch.arange(max_span, device=subword_vecs.device)
        gather_pos = (starts[..., None] + offsets).clamp(max=seq - 1)  # [B, W, T]
        flat_pos = gather_pos.reshape(batch, n_words * max_span)
        gathered = torch.gather(
            subword_vecs, 1, flat_pos[..., None].expand(-1, -1, d_model)
        ).reshape(batch, n_words, max_span, d_model)
        in_window = offsets[None, None, :] < span_len[..., None]
        gathered = gathered * in_window[..., None].to(gathered.dtype)

        k = self.kernel_width
        conv_in = gathered.reshape(batch * n_words, max_span, d_model).transpose(1, 2)
        conv_in = torch.nn.functional.pad(conv_in, ((k - 1) // 2, k // 2))
        conv_out = torch.nn.functional.conv1d(conv_in, self.weight, self.bias)
        conv_out = conv_out.transpose(1, 2).reshape(batch, n_words, max_span, d_model)

        lowest = torch.finfo(conv_out.dtype).min
        conv_out = conv_out.masked_fill(~in_window[..., None], lowest)
        pooled = conv_out.amax(dim=2)
        return torch.where(word_mask[..., None], pooled, torch.zeros_like(pooled))


def _gru_gate_params(embed_dim: int, hidden: int, dtype):
    return nn.ParameterDict(
        {
            "wz": nn.Parameter(torch.empty(embed_dim, hidden, dtype=dtype)),
            "uz": nn.Parameter(torch.empty(hidden, hidden, dtype=dtype)),
            "bz": nn.Parameter(torch.zeros(hidden, dtype=dtype)),
            "wr": nn.Parameter(torch.empty(embed_dim, hidden, dtype=dtype)),
            "ur": nn.Parameter(torch.empty(hidden, hidden, dtype=dtype)),
            "br": nn.Parameter(torch.zeros(hidden, dtype=dtype)),
            "wn": nn.Parameter(torch.empty(embed_dim, hidden, dtype=dtype)),
            "un": nn.Parameter(torch.empty(hidden, hidden, dtype=dtype)),
            "bn": nn.Parameter(torch.zeros(hidden, dtype=dtype)),
        }
    )


def gru_step(x_t, h_prev, p):
    """One GRU step.

    z = sigmoid(x Wz + h Uz + bz)        update gate
    r = sigmoid(x Wr + h Ur + br)        reset gate
    n = tanh(x Wn + (r * h) Un + bn)     candidate
    h' = (1 - z) * n + z * h
    """
    z = torch.sigmoid(x_t @ p["wz"] + h_prev @ p["uz"] + p["bz"])
    r = torch.sigmoid(x_t @ p["wr"] + h_prev @ p["ur"] + p["br"])
    n = torch.tanh(x_t @ p["wn"] + (r * h_prev) @ p["un"] + p["bn"])
    return (1.0 - z) * n + z * h_prev


def run_gru(x, lengths, params):
    """Run a single-direction GRU over [N, T, E]; zero initial state.

    Steps at or beyond a row's length neither update the state nor emit
    output (those output positions are zero), so batch padding cannot leak
    into valid positions.
    """
    n_rows, steps, _ = x.shape
    hidden = params["bz"].shape[0]
    h = x.new_zeros(n_rows, hidden)
    outputs = []
    for t in range(steps):
        h_new = gru_step(x[:, t, :], h, params)
        valid = (t < lengths)[:, None]
        h = torch.where(valid, h_new, h)
        outputs.append(torch.where(valid, h_new, torch.zeros_like(h_new)))
    return torch.stack(outputs, dim=1)


def reverse_padded(x, lengths):
    """Reverse each row of [N, T, ...] within its own valid length."""
    n_rows, steps = x.shape[0], x.shape[1]
    idx = torch.arange(steps, device=x.device)[None, :].expand(n_rows, steps)
    rev = torch.where(idx < lengths[:, None], lengths[:, None] - 1 - idx, idx)
    while rev.dim() < x.dim():
        rev = rev[..., None]
    return torch.gather(x, 1, rev.expand_as(x))


class SemanticEncoder(nn.Module):
    """Label embeddings + shared BiGRU per aspect row + projection.

    Every aspect row runs through the same bidirectional GRU; the m
    per-word [2 * gru_hidden] outputs are concatenated and linearly
    projected to sem_proj_dim, so the fused width is independent of m.
    """

    def __init__(self, num_label_ids: int, cfg: FusionConfig, dtype=torch.float32):
        super().__init__()
        self.cfg = cfg
        self.num_label_ids = num_label_ids
        self.label_embed = nn.Parameter(
            torch.empty(num_label_ids, cfg.label_embed_dim, dtype=dtype)
        )
        self.fwd = _gru_gate_params(cfg.label_embed_dim, cfg.gru_hidden, dtype)
        self.bwd = _gru_gate_params(cfg.label_embed_dim, cfg.gru_hidden, dtype)
        self.proj_w = nn.Parameter(
            torch.empty(2 * cfg.gru_hidden * cfg.num_aspects, cfg.sem_proj_dim, dtype=dtype)
        )
        self.proj_b = nn.Parameter(torch.zeros(cfg.sem_proj_dim, dtype=dtype))
        init_parameters(self, 0)

    def forward(self, aspect_grids, word_lengths):
        """Encode [B, m, W] label-id grids into [B, W, sem_proj_dim]."""
        batch, m, n_words = aspect_grids.shape
        if m != self.cfg.num_aspects:
            raise DataError(
                f"grid has {m} aspects but the encoder is sized for "
                f"{self.cfg.num_aspects}"
            )
        if int(aspect_grids.max()) >= self.num_label_ids:
            raise DataError("aspect label id out of range")
        emb = self.label_embed[aspect_grids]  # [B, m, W, E]
        flat = emb.reshape(batch * m, n_words, self.cfg.label_embed_dim)
        lengths = word_lengths.repeat_interleave(m)
        fwd_out = run_gru(flat, lengths, self.fwd)
        bwd_out = reverse_padded(
            run_gru(reverse_padded(flat, lengths), lengths, self.bwd), lengths
        )
        both = torch.cat([fwd_out, bwd_out], dim=-1)  # [B*m, W, 2H]
        both = both.reshape(batch, m, n_words, -1).permute(0, 2, 1, 3)
        stacked = both.reshape(batch, n_words, -1)  # [B, W, m*2H]
        return stacked @ self.proj_w + self.proj_b


def fuse(word_context, word_semantics):
    """Concatenate per-word context and semantic vectors; h is the CLS row.

    Returns (fused [B, W, D+P], h [B, D+P]).
    """
    if word_context.shape[:2] != word_semantics.shape[:2]:
        raise DataError(
            f"word counts differ: context {tuple(word_context.shape[:2])} vs "
            f"semantics {tuple(word_semantics.shape[:2])}"
        )
    fused = torch.cat([word_context, word_semantics], dim=-1)
    return fused, fused[:, 0, :]


def classify(h, weight, bias):
    """Affine map to class logits followed by softmax."""
    if h.shape[-1] != weight.shape[0]:
        raise DataError(
            f"classifier expects width {weight.shape[0]}, got {h.shape[-1]}"
        )
    return torch.softmax(h @ weight + bias, dim=-1)


class EntailmentModel(nn.Module):
    """Full pipeline: context encoder, word aligner, semantic encoder,
    fusion, 3-way classifier."""

    def __init__(
        self,
        vocab_size: int,
        num_label_ids: int,
        encoder_cfg: EncoderConfig,
        fusion_cfg: FusionConfig,
        dtype=torch.float32,
    ):
        super().__init__()
        self.encoder_cfg = encoder_cfg
        self.fusion_cfg = fusion_cfg
        self.encoder = ContextEncoder(vocab_size, encoder_cfg, dtype=dtype)
        self.aligner = WordAligner(
            encoder_cfg.d_model, fusion_cfg.cnn_kernel_width, dtype=dtype
        )
        self.semantics = SemanticEncoder(num_label_ids, fusion_cfg, dtype=dtype)
        self.cls_w = nn.Parameter(
            torch.empty(
                encoder_cfg.d_model + fusion_cfg.sem_proj_dim,
                fusion_cfg.num_classes,
                dtype=dtype,
            )
        )
        self.cls_b = nn.Parameter(torch.zeros(fusion_cfg.num_classes, dtype=dtype))
        # one generator over the whole tree overrides the submodules' own init
        init_parameters(self, encoder_cfg.seed)

    def forward_logits(self, batch, training: bool = False):
        ctx = self.encoder(batch.subword_ids, batch.subword_lengths, training)
        words = self.aligner(ctx, batch.word_spans, batch.word_mask)
        sem = self.semantics(batch.aspect_grids, batch.word_lengths)
        _, h = fuse(words, sem)
        return h @ self.cls_w + self.cls_b

    def forward(self, batch):
        """Per-example probability triples over (agree, disagree, neutral)."""
        return torch.softmax(self.forward_logits(batch, training=False), dim=-1)
