"""Synthetic corpora for tests and demos.

Four pair-corpus flavors with controlled signal placement:

* ``separable``     - label readable off a marker token; small, for overfit runs
* ``text-signal``   - marker token decides the label, aspects are
                      text-derived noise (no label information)
* ``aspect-signal`` - texts are label-independent; only the premise's role
                      labels decide the label
* ``aspect2-signal``- like aspect-signal but the informative row is the
                      second aspect, so capacity m=1 cuts it away

plus an ``srl`` flavor: gold IOB sentences with ten noisy tagger outputs
for exercising the merge pipeline and span scoring.
"""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass

from .aspects import AspectSet, all_o_row
from .corpus import LABELS, LabeledSentence, PremisePair
from .errors import ConfigError

PAIR_KINDS = ("separable", "text-signal", "aspect-signal", "aspect2-signal")
KINDS = PAIR_KINDS + ("srl",)

_WORDS = (
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet "
    "kilo lima mike november oscar papa quebec romeo sierra tango"
).split()
_MARKERS = {"agree": "indeed", "disagree": "never", "neutral": "perhaps"}
_SIGNAL_ROLES = {"agree": "AGT", "disagree": "PAT", "neutral": "LOC"}
_NOISE_ROLES = ("AGT", "PAT", "LOC", "TMP")


@dataclass
class PairFixture:
    train_pairs: list[PremisePair]
    test_pairs: list[PremisePair]
    aspect_sets: dict[str, AspectSet]


@dataclass
class SrlFixture:
    gold: list[LabeledSentence]
    predictions: list[list[LabeledSentence]]
    tokens_by_id: dict[str, tuple[str, ...]]


def _tokens(rng: random.Random, length: int) -> tuple[str, ...]:
    return tuple(rng.choice(_WORDS) for _ in range(length))


def _row_with(length: int, verb_pos: int, extras: dict[int, str]) -> tuple[str, ...]:
    row = ["O"] * length
    row[verb_pos] = "B-V"
    for pos, role in extras.items():
        row[pos] = f"B-{role}"
    return tuple(row)


def _noise_row(tokens, seed: int) -> tuple[str, ...]:
    """A single-verb row derived only from the tokens, so it can never
    carry label information beyond what the text already does."""
    digest = zlib.crc32(" ".join(tokens).encode("utf-8"))
    rng = random.Random(digest ^ seed)
    length = len(tokens)
    verb_pos = rng.randrange(length)
    extras = {}
    free = [i for i in range(length) if i != verb_pos]
    rng.shuffle(free)
    for pos in free[: rng.randint(0, min(2, len(free)))]:
        extras[pos] = rng.choice(_NOISE_ROLES)
    return _row_with(length, verb_pos, extras)


def _single_row_set(sid: str, tokens, row) -> AspectSet:
    return AspectSet(sentence_id=sid, tokens=tuple(tokens), aspects=(tuple(row),), n_real=1)


def _sentence_pool(rng: random.Random, count: int, length: int) -> list[tuple[str, ...]]:
    return [_tokens(rng, length) for _ in range(count)]


def _make_pairs(kind: str, count: int, seed: int, id_prefix: str, start: int = 0):
    """Yield (pair, premise AspectSet, hypothesis AspectSet) triples."""
    rng = random.Random(seed)
    pool1 = _sentence_pool(rng, 4, 5)
    pool2 = _sentence_pool(rng, 5, 4)
    out = []
    for offset in range(count):
        i = start + offset
        label = LABELS[i % 3]
        lang = "vie" if i % 2 == 0 else "eng"
        pid = f"{id_prefix}{i:04d}"

        if kind in ("separable", "text-signal"):
            text1 = _tokens(rng, rng.randint(3, 5))
            text2 = (_MARKERS[label],) + _tokens(rng, rng.randint(2, 3))
            row1 = _noise_row(text1, seed)
            row2 = _noise_row(text2, seed)
            a1 = _single_row_set(f"{pid}.1", text1, row1)
            a2 = _single_row_set(f"{pid}.2", text2, row2)
        elif kind == "aspect-signal":
            text1 = pool1[i % 4]
            text2 = pool2[i % 5]
            row1 = _row_with(len(text1), 0, {1: _SIGNAL_ROLES[label]})
            a1 = _single_row_set(f"{pid}.1", text1, row1)
            a2 = _single_row_set(f"{pid}.2", text2, _noise_row(text2, seed))
        elif kind == "aspect2-signal":
            text1 = pool1[i % 4]
            text2 = pool2[i % 5]
            first = _row_with(len(text1), 0, {})
            second = _row_with(len(text1), 1, {2: _SIGNAL_ROLES[label]})
            a1 = AspectSet(
                sentence_id=f"{pid}.1",
                tokens=text1,
                aspects=(first, second),
                n_real=2,
            )
            a2 = _single_row_set(f"{pid}.2", text2, _noise_row(text2, seed))
        else:
            raise ConfigError(f"unknown pair fixture kind {kind!r}")

        pair = PremisePair(id=pid, text1=a1.tokens, text2=a2.tokens, label=label, lang=lang)
        out.append((pair, a1, a2))
    return out


def make_pair_fixture(
    kind: str, n_train: int, n_test: int, seed: int
) -> PairFixture:
    if kind not in PAIR_KINDS:
        raise ConfigError(f"unknown fixture kind {kind!r}; expected one of {PAIR_KINDS}")
    triples = _make_pairs(kind, n_train + n_test, seed, id_prefix=f"{kind[:3]}-")
    aspect_sets = {}
    pairs = []
    for pair, a1, a2 in triples:
        pairs.append(pair)
        aspect_sets[a1.sentence_id] = a1
        aspect_sets[a2.sentence_id] = a2
    return PairFixture(
        train_pairs=pairs[:n_train],
        test_pairs=pairs[n_train:],
        aspect_sets=aspect_sets,
    )


def make_srl_fixture(n_sentences: int = 40, n_models: int = 10, seed: int = 0) -> SrlFixture:
    """Gold sentences plus per-model noisy predictions.

    Models frequently agree exactly (exercising dedupe), sometimes emit a
    two-verb row (exercising the multi-verb filter), and sometimes skip a
    sentence.
    """
    rng = random.Random(seed)
    gold = []
    for i in range(n_sentences):
        length = rng.randint(4, 8)
        tokens = _tokens(rng, length)
        verb_pos = rng.randrange(length)
        extras = {}
        free = [p for p in range(length) if p != verb_pos]
        rng.shuffle(free)
        for pos in free[: rng.randint(1, 2)]:
            extras[pos] = rng.choice(_NOISE_ROLES)
        gold.append(
            LabeledSentence(
                sentence_id=f"s{i:03d}",
                tokens=tokens,
                labels=_row_with(length, verb_pos, extras),
            )
        )

    predictions: list[list[LabeledSentence]] = []
    for _ in range(n_models):
        model_out = []
        for sent in gold:
            roll = rng.random()
            length = len(sent.tokens)
            if roll < 0.5:
                labels = sent.labels
            elif roll < 0.7:
                verb_pos = rng.randrange(length)
                labels = _row_with(length, verb_pos, {})
            elif roll < 0.85 and length >= 2:
                positions = rng.sample(range(length), 2)
                labels = tuple(
                    "B-V" if p in positions else "O" for p in range(length)
                )
            else:
                continue
            model_out.append(
                LabeledSentence(
                    sentence_id=sent.sentence_id, tokens=sent.tokens, labels=labels
                )
            )
        predictions.append(model_out)

    tokens_by_id = {s.sentence_id: s.tokens for s in gold}
    return SrlFixture(gold=gold, predictions=predictions, tokens_by_id=tokens_by_id)


def toy_run_config(kind: str, m: int = 2, seed: int = 13) -> dict:
    """RunConfig dict sized for CPU-desk training on the generated corpora."""
    return {
        "train_pairs": "train_pairs.jsonl",
        "train_aspects": "aspects.jsonl",
        "eval_pairs": "test_pairs.jsonl",
        "eval_aspects": "aspects.jsonl",
        "checkpoint": "out/model.ckpt",
        "output_dir": "out",
        "seed": seed,
        "m": m,
        "split_ratio": 0.8,
        "chunk_size": 3,
        "ablate_semantics": False,
        "encoder": {
            "d_model": 32,
            "layers": 1,
            "heads": 2,
            "ffn_dim": 64,
            "max_length": 48,
            "dropout": 0.0,
        },
        "fusion": {
            "label_embed_dim": 8,
            "gru_hidden": 8,
            "sem_proj_dim": 16,
            "cnn_kernel_width": 3,
            "num_aspects": m,
            "num_classes": 3,
        },
        "train": {
            "learning_rate": 1e-3,
            "weight_decay": 0.01,
            "batch_size": 8,
            "max_length": 48,
            "epochs": 30,
        },
    }


def make_overfit_fixture(seed: int = 0) -> PairFixture:
    """The 32-pair separable corpus used by the overfit sanity run."""
    fixture = make_pair_fixture("separable", n_train=32, n_test=0, seed=seed)
    return fixture
