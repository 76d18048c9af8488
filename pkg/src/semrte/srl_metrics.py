"""Span-based SRL scoring, k-fold planning, and fold-metric aggregation."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .errors import DataError


def pct(fraction: float) -> float:
    """Percent-scale a fraction and quantize half-up to 2 decimals."""
    return float(Decimal(repr(fraction * 100.0)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True, order=True)
class Span:
    """One role span over word indices, both ends inclusive."""

    role: str
    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start <= self.end):
            raise DataError(f"bad span bounds ({self.start}, {self.end})")


@dataclass(frozen=True)
class PRF:
    """Micro precision/recall/F1 with the raw match counts behind them."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(tp=tp, fp=fp, fn=fn, precision=p, recall=r, f1=f1)

    def to_json_dict(self) -> dict:
        return {
            "precision": pct(self.precision),
            "recall": pct(self.recall),
            "f1": pct(self.f1),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


@dataclass(frozen=True)
class FoldAverage:
    """Arithmetic means of per-fold precision/recall/f1.

    Deliberately not a PRF: the mean F1 is not the harmonic mean of the
    mean P and R, so the PRF invariant does not hold for averages.
    """

    precision: float
    recall: float
    f1: float

    def to_json_dict(self) -> dict:
        return {
            "precision": pct(self.precision),
            "recall": pct(self.recall),
            "f1": pct(self.f1),
        }


@dataclass(frozen=True)
class KFoldPlan:
    k: int
    assignment: dict[str, int]

    def fold_ids(self, fold: int) -> list[str]:
        return [sid for sid, f in self.assignment.items() if f == fold]


def extract_spans(labels) -> list[Span]:
    """Decode an IOB sequence into role spans, ordered by start index.

    Maximal B-/I- runs of one role become one span; O contributes nothing.
    The sequence is assumed grammar-valid (see corpus.validate_iob).
    """
    spans: list[Span] = []
    role = None
    start = 0
    for pos, tag in enumerate(labels):
        if tag.startswith("I-") and role == tag[2:]:
            continue
        if role is not None:
            spans.append(Span(role=role, start=start, end=pos - 1))
            role = None
        if tag.startswith("B-"):
            role = tag[2:]
            start = pos
    if role is not None:
        spans.append(Span(role=role, start=start, end=len(labels) - 1))
    return spans


def spans_to_iob(spans, length: int) -> list[str]:
    """Re-encode spans as an IOB sequence of `length` tags."""
    labels = ["O"] * length
    for span in spans:
        if span.end >= length:
            raise DataError(f"span {span} exceeds sequence length {length}")
        labels[span.start] = f"B-{span.role}"
        for pos in range(span.start + 1, span.end + 1):
            labels[pos] = f"I-{span.role}"
    return labels


def span_prf(gold, pred) -> PRF:
    """Micro-averaged exact-match span P/R/F1 over parallel sentence lists.

    A predicted span counts as a true positive when the same
    (role, start, end) triple appears in the gold set of the same sentence,
    with multiset semantics for repeated spans.
    """
    gold = list(gold)
    pred = list(pred)
    if len(gold) != len(pred):
        raise DataError(
            f"gold has {len(gold)} sentences but pred has {len(pred)}"
        )
    tp = fp = fn = 0
    for g_spans, p_spans in zip(gold, pred):
        g_count = Counter(g_spans)
        p_count = Counter(p_spans)
        matched = sum((g_count & p_count).values())
        tp += matched
        fp += sum(p_count.values()) - matched
        fn += sum(g_count.values()) - matched
    return PRF.from_counts(tp=tp, fp=fp, fn=fn)


def kfold_split(ids, k: int, seed: int) -> KFoldPlan:
    """Assign ids to k folds, deterministically per seed, sizes within 1."""
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise DataError("duplicate ids in k-fold input")
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if k > len(ids):
        raise DataError(f"k={k} exceeds the {len(ids)} available ids")
    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    assignment = {sid: pos % k for pos, sid in enumerate(shuffled)}
    return KFoldPlan(k=k, assignment=assignment)


def aggregate_folds(per_fold) -> FoldAverage:
    """Arithmetic mean of per-fold precision, recall, and f1."""
    per_fold = list(per_fold)
    if not per_fold:
        raise DataError("cannot aggregate zero folds")
    n = len(per_fold)
    return FoldAverage(
        precision=sum(f.precision for f in per_fold) / n,
        recall=sum(f.recall for f in per_fold) / n,
        f1=sum(f.f1 for f in per_fold) / n,
    )
