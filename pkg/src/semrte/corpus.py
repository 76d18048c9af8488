"""Entailment-pair and IOB corpus parsing, validation, statistics, and splits.

Two on-disk formats live here:

* pair format: UTF-8 line-delimited JSON objects with keys
  ``id``, ``text1``, ``text2``, ``label``, ``lang``; the text fields are
  space-joined token strings (inputs arrive whitespace-pretokenized).
* tagged-sentence format: UTF-8 ``token<TAB>tag`` lines, sentences
  separated by blank lines, with an optional ``# id = <string>`` header
  line per sentence.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field

from .errors import DataError

LABELS = ("agree", "disagree", "neutral")
LANGS = ("vie", "eng")

# Hypotheses (text2) in this corpus format are always Vietnamese; only the
# premise language varies, which is what the per-pair `lang` field tags.
HYPOTHESIS_LANG = "vie"

VERB_ROLE = "V"

_TAG_RE = re.compile(r"^(O|[BI]-\S+)$")


def label_to_id(label: str) -> int:
    return LABELS.index(label)


def validate_iob(labels: list[str] | tuple[str, ...], where: str = "") -> None:
    """Raise DataError unless `labels` is a well-formed IOB sequence.

    Every tag must be ``O``, ``B-<role>`` or ``I-<role>``, and an
    ``I-<role>`` must be preceded by ``B-<role>`` or ``I-<role>`` of the
    same role.
    """
    prefix = f"{where}: " if where else ""
    prev_role = None
    for pos, tag in enumerate(labels):
        if not _TAG_RE.match(tag):
            raise DataError(f"{prefix}invalid tag {tag!r} at position {pos}")
        if tag == "O":
            prev_role = None
            continue
        kind, role = tag[0], tag[2:]
        if kind == "I" and prev_role != role:
            raise DataError(
                f"{prefix}{tag} without preceding B-{role} at position {pos}"
            )
        prev_role = role


@dataclass(frozen=True)
class PremisePair:
    """One entailment example: premise tokens, hypothesis tokens, gold label."""

    id: str
    text1: tuple[str, ...]
    text2: tuple[str, ...]
    label: str
    lang: str

    def __post_init__(self):
        if not self.text1 or not self.text2:
            raise DataError(f"pair {self.id!r}: empty text")
        if self.label not in LABELS:
            raise DataError(f"pair {self.id!r}: unknown label {self.label!r}")
        if self.lang not in LANGS:
            raise DataError(f"pair {self.id!r}: unknown lang {self.lang!r}")


@dataclass(frozen=True)
class LabeledSentence:
    """A tokenized sentence with one IOB role-label sequence."""

    sentence_id: str
    tokens: tuple[str, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.tokens):
            raise DataError(
                f"sentence {self.sentence_id!r}: {len(self.labels)} labels "
                f"for {len(self.tokens)} tokens"
            )
        validate_iob(self.labels, where=f"sentence {self.sentence_id!r}")


@dataclass(frozen=True)
class LabelInventory:
    """Bijective tag<->id maps over {O} union {B-,I-} x roles; O is id 0."""

    roles: tuple[str, ...]
    tag_to_id: dict[str, int] = field(compare=False)
    id_to_tag: dict[int, str] = field(compare=False)

    @classmethod
    def from_roles(cls, roles) -> "LabelInventory":
        roles = tuple(sorted(set(roles)))
        if VERB_ROLE not in roles:
            raise DataError(f"label inventory must contain the {VERB_ROLE!r} role")
        tag_to_id = {"O": 0}
        for role in roles:
            for kind in ("B", "I"):
                tag_to_id[f"{kind}-{role}"] = len(tag_to_id)
        return cls(
            roles=roles,
            tag_to_id=tag_to_id,
            id_to_tag={i: t for t, i in tag_to_id.items()},
        )

    @classmethod
    def from_label_sequences(cls, sequences) -> "LabelInventory":
        roles = {tag[2:] for seq in sequences for tag in seq if tag != "O"}
        return cls.from_roles(roles)

    @property
    def num_ids(self) -> int:
        return len(self.tag_to_id)

    def encode(self, labels) -> list[int]:
        try:
            return [self.tag_to_id[tag] for tag in labels]
        except KeyError as exc:
            raise DataError(f"tag {exc.args[0]!r} not in label inventory") from None


@dataclass
class CorpusStats:
    """Pair counts per language, split by text slot.

    `text1` is keyed by the per-pair premise language; every hypothesis is
    counted under HYPOTHESIS_LANG, so `text2` is all pairs for that key and
    zero elsewhere.
    """

    total: int
    text1: dict[str, int]
    text2: dict[str, int]
    by_label: dict[str, int]


def parse_pairs(stream) -> list[PremisePair]:
    """Parse line-delimited JSON entailment pairs.

    `stream` is a string or an iterable of lines. Errors carry 1-based line
    numbers.
    """
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = [line.rstrip("\n") for line in stream]
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed JSON at line {lineno}: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise DataError(f"expected a JSON object at line {lineno}")
        missing = [k for k in ("id", "text1", "text2", "label", "lang") if k not in obj]
        if missing:
            raise DataError(f"missing keys {missing} at line {lineno}")
        label, lang = obj["label"], obj["lang"]
        if label not in LABELS:
            raise DataError(f"unknown label {label!r} at line {lineno}")
        if lang not in LANGS:
            raise DataError(f"unknown lang {lang!r} at line {lineno}")
        text1 = tuple(str(obj["text1"]).split())
        text2 = tuple(str(obj["text2"]).split())
        if not text1 or not text2:
            raise DataError(f"empty text field at line {lineno}")
        pairs.append(
            PremisePair(id=str(obj["id"]), text1=text1, text2=text2, label=label, lang=lang)
        )
    return pairs


def pairs_to_jsonl(pairs) -> str:
    """Serialize pairs back to the line-delimited JSON format."""
    lines = []
    for p in pairs:
        lines.append(
            json.dumps(
                {
                    "id": p.id,
                    "text1": " ".join(p.text1),
                    "text2": " ".join(p.text2),
                    "label": p.label,
                    "lang": p.lang,
                },
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


_ID_HEADER_RE = re.compile(r"^#\s*id\s*=\s*(.+?)\s*$")


def parse_conll(text: str) -> list[LabeledSentence]:
    """Parse blank-line-separated token<TAB>tag blocks into sentences.

    A ``# id = <string>`` comment preceding a block names the sentence;
    otherwise the sentence id is the 0-based block ordinal.
    """
    sentences = []
    tokens: list[str] = []
    tags: list[str] = []
    pending_id: str | None = None

    def flush(lineno: int):
        nonlocal tokens, tags, pending_id
        if not tokens:
            pending_id = None
            return
        sid = pending_id if pending_id is not None else str(len(sentences))
        try:
            sentences.append(
                LabeledSentence(sentence_id=sid, tokens=tuple(tokens), labels=tuple(tags))
            )
        except DataError as exc:
            raise DataError(f"near line {lineno}: {exc}") from None
        tokens, tags, pending_id = [], [], None

    lineno = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            flush(lineno)
            continue
        m = _ID_HEADER_RE.match(stripped)
        if m:
            pending_id = m.group(1)
            continue
        if stripped.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise DataError(f"line {lineno}: expected 'token<TAB>tag', got {line!r}")
        tokens.append(parts[0].strip())
        tags.append(parts[1].strip())
    flush(lineno + 1)
    return sentences


def sentences_to_conll(sentences, with_ids: bool = True) -> str:
    """Serialize sentences to the token<TAB>tag block format."""
    blocks = []
    for s in sentences:
        lines = [f"# id = {s.sentence_id}"] if with_ids else []
        lines.extend(f"{tok}\t{tag}" for tok, tag in zip(s.tokens, s.labels))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def corpus_stats(pairs) -> CorpusStats:
    """Count pairs per language and text slot (Table-I-shaped statistics)."""
    text1 = {lang: 0 for lang in LANGS}
    text2 = {lang: 0 for lang in LANGS}
    by_label = {label: 0 for label in LABELS}
    for p in pairs:
        text1[p.lang] += 1
        text2[HYPOTHESIS_LANG] += 1
        by_label[p.label] += 1
    return CorpusStats(total=len(pairs), text1=text1, text2=text2, by_label=by_label)


def split_train_val(pairs, ratio: float, seed: int):
    """Stratified train/val split.

    Pairs are stratified by (label, lang); each stratum contributes
    floor(ratio * n) pairs to train and the remainder to val, after a
    deterministic per-seed shuffle. Output order follows input order.
    """
    if not (0.0 < ratio < 1.0):
        raise DataError(f"split ratio must be in (0, 1), got {ratio}")
    strata: dict[tuple[str, str], list[int]] = {}
    for idx, p in enumerate(pairs):
        strata.setdefault((p.label, p.lang), []).append(idx)
    rng = random.Random(seed)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for key in sorted(strata):
        bucket = list(strata[key])
        rng.shuffle(bucket)
        n_train = math.floor(ratio * len(bucket))
        train_idx.extend(bucket[:n_train])
        val_idx.extend(bucket[n_train:])
    train_idx.sort()
    val_idx.sort()
    return [pairs[i] for i in train_idx], [pairs[i] for i in val_idx]
