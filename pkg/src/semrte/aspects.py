"""Merging ensemble SRL outputs into per-sentence aspect sets.

An "aspect" is one complete IOB label sequence for a sentence under one
predicate. Ten tagger outputs per sentence are deduplicated, filtered,
grouped, then capped/padded to a fixed number of rows m so every sentence
encodes to the same aspect-grid shape.

Merged sets serialize as line-delimited JSON:
``{"sentence_id": ..., "tokens": [...], "aspects": [[tag, ...], ...]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .corpus import VERB_ROLE, LabelInventory, PremisePair, validate_iob
from .errors import DataError
from .srl_metrics import extract_spans

O_TAG = "O"


@dataclass(frozen=True)
class PredictedSequence:
    """One tagger's IOB output for one sentence."""

    sentence_id: str
    source_model: int
    labels: tuple[str, ...]

    def __post_init__(self):
        validate_iob(self.labels, where=f"sentence {self.sentence_id!r}")


@dataclass(frozen=True)
class AspectSet:
    """A sentence with its ordered aspect rows.

    `n_real` counts non-padding rows (the all-O fallback row of a sentence
    with no surviving sequence is real). Rows appended by cap_and_pad are
    padding and all-O.
    """

    sentence_id: str
    tokens: tuple[str, ...]
    aspects: tuple[tuple[str, ...], ...]
    n_real: int
    m: int | None = None


def all_o_row(length: int) -> tuple[str, ...]:
    return (O_TAG,) * length


def fallback_aspect_set(sentence_id: str, tokens) -> AspectSet:
    """The single all-O aspect used when no tagger output survived."""
    tokens = tuple(tokens)
    return AspectSet(
        sentence_id=sentence_id,
        tokens=tokens,
        aspects=(all_o_row(len(tokens)),),
        n_real=1,
    )


def dedupe(seqs) -> list[PredictedSequence]:
    """Drop repeated (sentence_id, labels) pairs, keeping the first seen."""
    seen: set[tuple[str, tuple[str, ...]]] = set()
    kept = []
    for seq in seqs:
        key = (seq.sentence_id, seq.labels)
        if key in seen:
            continue
        seen.add(key)
        kept.append(seq)
    return kept


def count_verb_spans(labels) -> int:
    return sum(1 for span in extract_spans(labels) if span.role == VERB_ROLE)


def filter_multi_verb(seqs) -> list[PredictedSequence]:
    """Drop sequences whose span decomposition has two or more verb spans.

    Zero-verb sequences survive; the rule removes only genuinely
    multi-predicate rows.
    """
    return [seq for seq in seqs if count_verb_spans(seq.labels) < 2]


def _aspect_order_key(labels, n_tokens: int):
    verb_starts = [s.start for s in extract_spans(labels) if s.role == VERB_ROLE]
    return (verb_starts[0] if verb_starts else n_tokens, labels)


def group_by_sentence(seqs, tokens_by_id: dict) -> list[AspectSet]:
    """Combine surviving sequences into one AspectSet per known sentence.

    Aspects are ordered by the position of their verb span (verbless rows
    last, ties broken lexicographically). Sentences with no surviving
    sequence get the single all-O fallback row. Output follows
    `tokens_by_id` order.
    """
    by_sentence: dict[str, list[PredictedSequence]] = {}
    for seq in seqs:
        if seq.sentence_id not in tokens_by_id:
            raise DataError(f"sentence {seq.sentence_id!r} has no tokens")
        expected = len(tokens_by_id[seq.sentence_id])
        if len(seq.labels) != expected:
            raise DataError(
                f"sentence {seq.sentence_id!r}: sequence length {len(seq.labels)} "
                f"!= token count {expected}"
            )
        by_sentence.setdefault(seq.sentence_id, []).append(seq)

    sets = []
    for sid, tokens in tokens_by_id.items():
        tokens = tuple(tokens)
        group = by_sentence.get(sid)
        if not group:
            sets.append(fallback_aspect_set(sid, tokens))
            continue
        rows = sorted(
            (seq.labels for seq in group),
            key=lambda labels: _aspect_order_key(labels, len(tokens)),
        )
        sets.append(
            AspectSet(sentence_id=sid, tokens=tokens, aspects=tuple(rows), n_real=len(rows))
        )
    return sets


def cap_and_pad(aset: AspectSet, m: int) -> AspectSet:
    """Keep the first m aspects; pad with all-O rows up to exactly m."""
    if m < 1:
        raise DataError(f"aspect capacity m must be >= 1, got {m}")
    rows = list(aset.aspects[:m])
    n_real = min(aset.n_real, m)
    while len(rows) < m:
        rows.append(all_o_row(len(aset.tokens)))
    return replace(aset, aspects=tuple(rows), n_real=n_real, m=m)


def count_predicates(aset: AspectSet) -> int:
    """Number of non-padding aspects that contain a verb span."""
    return sum(
        1 for row in aset.aspects[: aset.n_real] if count_verb_spans(row) >= 1
    )


def pair_aspects(
    pair: PremisePair,
    a1: AspectSet,
    a2: AspectSet,
    m: int,
    inventory: LabelInventory,
    keep1: int | None = None,
    keep2: int | None = None,
) -> list[list[int]]:
    """Label-id grid for the joined [CLS] text1 [SEP] text2 [SEP] sequence.

    Row i combines aspect i of each side; special positions carry O (id 0).
    `keep1`/`keep2` limit each side to its first N words, mirroring
    tokenizer truncation so the grid width matches the tokenized word count.
    """
    if a1.tokens != pair.text1:
        raise DataError(f"pair {pair.id!r}: text1 tokens do not match its aspect set")
    if a2.tokens != pair.text2:
        raise DataError(f"pair {pair.id!r}: text2 tokens do not match its aspect set")
    if len(a1.aspects) != m or len(a2.aspects) != m:
        raise DataError(
            f"pair {pair.id!r}: aspect sets must be capped to m={m} rows first"
        )
    k1 = len(pair.text1) if keep1 is None else keep1
    k2 = len(pair.text2) if keep2 is None else keep2
    if not (1 <= k1 <= len(pair.text1)) or not (1 <= k2 <= len(pair.text2)):
        raise DataError(f"pair {pair.id!r}: bad kept-word counts ({k1}, {k2})")
    o_id = inventory.tag_to_id[O_TAG]
    grid = []
    for row1, row2 in zip(a1.aspects, a2.aspects):
        ids = [o_id]
        ids.extend(inventory.encode(row1[:k1]))
        ids.append(o_id)
        ids.extend(inventory.encode(row2[:k2]))
        ids.append(o_id)
        grid.append(ids)
    return grid


def aspect_sets_to_jsonl(sets) -> str:
    lines = []
    for aset in sets:
        lines.append(
            json.dumps(
                {
                    "sentence_id": aset.sentence_id,
                    "tokens": list(aset.tokens),
                    "aspects": [list(row) for row in aset.aspects],
                },
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def parse_aspect_sets(stream) -> list[AspectSet]:
    """Parse merged AspectSet lines; pad rows are indistinguishable after
    reload, so n_real counts every non-all-O row plus leading real all-O."""
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = [line.rstrip("\n") for line in stream]
    sets = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed JSON at line {lineno}: {exc.msg}") from None
        try:
            sid = str(obj["sentence_id"])
            tokens = tuple(str(t) for t in obj["tokens"])
            rows = tuple(tuple(str(t) for t in row) for row in obj["aspects"])
        except (KeyError, TypeError):
            raise DataError(f"bad aspect record at line {lineno}") from None
        if not rows:
            raise DataError(f"aspect record at line {lineno} has no rows")
        for row in rows:
            if len(row) != len(tokens):
                raise DataError(
                    f"line {lineno}: aspect row length {len(row)} != "
                    f"{len(tokens)} tokens"
                )
            validate_iob(row, where=f"sentence {sid!r}")
        o_row = all_o_row(len(tokens))
        n_real = len(rows)
        while n_real > 1 and rows[n_real - 1] == o_row:
            n_real -= 1
        sets.append(
            AspectSet(sentence_id=sid, tokens=tokens, aspects=rows, n_real=n_real)
        )
    return sets
