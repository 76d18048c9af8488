"""Turning pairs + aspect sets into padded tensor batches for the model.

The aspect set for a pair's premise is looked up under "<pair_id>.1" and
the hypothesis under "<pair_id>.2"; a missing side falls back to the
single all-O aspect.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .aspects import AspectSet, cap_and_pad, count_predicates, fallback_aspect_set, pair_aspects
from .corpus import LabelInventory, PremisePair, label_to_id
from .encoder import PAD_ID, SubwordVocab, tokenize_pair
from .errors import InternalError


def side_id(pair_id: str, slot: int) -> str:
    return f"{pair_id}.{slot}"


@dataclass(frozen=True)
class EncodedExample:
    """One pair, fully encoded: subword ids, spans, aspect-id grid, gold."""

    pair_id: str
    lang: str
    gold: int
    subword_ids: tuple[int, ...]
    word_spans: tuple[tuple[int, int], ...]
    grid: tuple[tuple[int, ...], ...]
    predicates1: int
    predicates2: int


@dataclass
class EncodedBatch:
    """Padded tensors for a batch of encoded examples."""

    subword_ids: torch.Tensor  # [B, S] long
    subword_lengths: torch.Tensor  # [B] long
    word_spans: torch.Tensor  # [B, W, 2] long
    word_mask: torch.Tensor  # [B, W] bool
    word_lengths: torch.Tensor  # [B] long
    aspect_grids: torch.Tensor  # [B, m, W] long
    golds: torch.Tensor  # [B] long
    examples: list[EncodedExample]

    def __len__(self) -> int:
        return len(self.examples)


def encode_pair(
    pair: PremisePair,
    aset1: AspectSet,
    aset2: AspectSet,
    vocab: SubwordVocab,
    inventory: LabelInventory,
    m: int,
    max_length: int,
    ablate: bool = False,
) -> EncodedExample:
    """Encode one pair against its two (uncapped or capped) aspect sets."""
    a1 = cap_and_pad(aset1, m)
    a2 = cap_and_pad(aset2, m)
    tok = tokenize_pair(pair, vocab, max_length=max_length)
    grid = pair_aspects(pair, a1, a2, m, inventory, keep1=tok.keep1, keep2=tok.keep2)
    if len(grid[0]) != tok.num_words:
        raise InternalError(
            f"pair {pair.id!r}: aspect grid width {len(grid[0])} != "
            f"word count {tok.num_words}"
        )
    if ablate:
        grid = [[0] * len(row) for row in grid]
    return EncodedExample(
        pair_id=pair.id,
        lang=pair.lang,
        gold=label_to_id(pair.label),
        subword_ids=tok.subword_ids,
        word_spans=tok.word_spans,
        grid=tuple(tuple(row) for row in grid),
        predicates1=count_predicates(a1),
        predicates2=count_predicates(a2),
    )


def encode_corpus(
    pairs,
    aspect_sets_by_id: dict[str, AspectSet],
    vocab: SubwordVocab,
    inventory: LabelInventory,
    m: int,
    max_length: int,
    ablate: bool = False,
) -> list[EncodedExample]:
    examples = []
    for pair in pairs:
        aset1 = aspect_sets_by_id.get(side_id(pair.id, 1))
        aset2 = aspect_sets_by_id.get(side_id(pair.id, 2))
        if aset1 is None:
            aset1 = fallback_aspect_set(side_id(pair.id, 1), pair.text1)
        if aset2 is None:
            aset2 = fallback_aspect_set(side_id(pair.id, 2), pair.text2)
        examples.append(
            encode_pair(pair, aset1, aset2, vocab, inventory, m, max_length, ablate=ablate)
        )
    return examples


def collate(examples) -> EncodedBatch:
    """Pad a list of EncodedExamples into one EncodedBatch."""
    examples = list(examples)
    if not examples:
        raise InternalError("cannot collate an empty batch")
    batch = len(examples)
    m = len(examples[0].grid)
    max_sub = max(len(e.subword_ids) for e in examples)
    max_words = max(len(e.word_spans) for e in examples)

    subword_ids = torch.full((batch, max_sub), PAD_ID, dtype=torch.long)
    subword_lengths = torch.zeros(batch, dtype=torch.long)
    word_spans = torch.zeros(batch, max_words, 2, dtype=torch.long)
    word_mask = torch.zeros(batch, max_words, dtype=torch.bool)
    word_lengths = torch.zeros(batch, dtype=torch.long)
    grids = torch.zeros(batch, m, max_words, dtype=torch.long)
    golds = torch.zeros(batch, dtype=torch.long)

    for i, ex in enumerate(examples):
        n_sub = len(ex.subword_ids)
        n_words = len(ex.word_spans)
        subword_ids[i, :n_sub] = torch.tensor(ex.subword_ids, dtype=torch.long)
        subword_lengths[i] = n_sub
        word_spans[i, :n_words] = torch.tensor(ex.word_spans, dtype=torch.long)
        word_mask[i, :n_words] = True
        word_lengths[i] = n_words
        for a, row in enumerate(ex.grid):
            grids[i, a, :n_words] = torch.tensor(row, dtype=torch.long)
        golds[i] = ex.gold

    return EncodedBatch(
        subword_ids=subword_ids,
        subword_lengths=subword_lengths,
        word_spans=word_spans,
        word_mask=word_mask,
        word_lengths=word_lengths,
        aspect_grids=grids,
        golds=golds,
        examples=examples,
    )
