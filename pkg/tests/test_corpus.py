import random

import pytest

from conftest import random_iob
from semrte.corpus import (
    LABELS,
    LANGS,
    LabelInventory,
    LabeledSentence,
    PremisePair,
    corpus_stats,
    pairs_to_jsonl,
    parse_conll,
    parse_pairs,
    sentences_to_conll,
    split_train_val,
    validate_iob,
)
from semrte.errors import DataError


def test_parse_pairs_basic():
    line = '{"id":"a","text1":"sun rises","text2":"sun up","label":"agree","lang":"eng"}'
    pairs = parse_pairs(line)
    assert pairs == [
        PremisePair(id="a", text1=("sun", "rises"), text2=("sun", "up"), label="agree", lang="eng")
    ]


def test_parse_pairs_empty_input():
    assert parse_pairs("") == []
    assert parse_pairs("\n\n") == []


def test_parse_pairs_unknown_label():
    line = '{"id":"a","text1":"x","text2":"y","label":"maybe","lang":"eng"}'
    with pytest.raises(DataError, match=r"unknown label 'maybe' at line 1"):
        parse_pairs(line)


def test_parse_pairs_unknown_lang():
    line = '{"id":"a","text1":"x","text2":"y","label":"agree","lang":"fra"}'
    with pytest.raises(DataError, match=r"unknown lang 'fra' at line 1"):
        parse_pairs(line)


def test_parse_pairs_malformed_line_number():
    good = '{"id":"a","text1":"x","text2":"y","label":"agree","lang":"eng"}'
    with pytest.raises(DataError, match=r"line 2"):
        parse_pairs(good + "\n{not json}")


def test_parse_pairs_missing_key():
    with pytest.raises(DataError, match=r"missing keys \['lang'\] at line 1"):
        parse_pairs('{"id":"a","text1":"x","text2":"y","label":"agree"}')


def _random_pair(rng, idx):
    words = lambda n: " ".join(rng.choice(["mot", "hai", "ba", "sun", "up"]) for _ in range(n))
    return {
        "id": f"p{idx}",
        "text1": words(rng.randint(1, 6)),
        "text2": words(rng.randint(1, 6)),
        "label": rng.choice(LABELS),
        "lang": rng.choice(LANGS),
    }


def test_pairs_round_trip():
    import json

    rng = random.Random(7)
    for _ in range(50):
        records = [_random_pair(rng, i) for i in range(rng.randint(0, 20))]
        text = "".join(json.dumps(r) + "\n" for r in records)
        pairs = parse_pairs(text)
        assert parse_pairs(pairs_to_jsonl(pairs)) == pairs


def test_parse_conll_basic():
    sents = parse_conll("He\tB-ARG0\nran\tB-V\n\n")
    assert len(sents) == 1
    assert sents[0].tokens == ("He", "ran")
    assert sents[0].labels == ("B-ARG0", "B-V")
    assert sents[0].sentence_id == "0"


def test_parse_conll_orphan_i_tag():
    with pytest.raises(DataError, match=r"I-ARG0 without preceding B-ARG0"):
        parse_conll("He\tI-ARG0\n\n")


def test_parse_conll_two_blocks():
    sents = parse_conll("a\tO\n\nb\tO\nc\tB-V\n")
    assert len(sents) == 2
    assert sents[0].sentence_id == "0"
    assert sents[1].sentence_id == "1"


def test_parse_conll_id_header():
    sents = parse_conll("# id = sent-42\nfoo\tB-V\n\nbar\tO\n")
    assert sents[0].sentence_id == "sent-42"
    assert sents[1].sentence_id == "1"


def test_parse_conll_bad_line():
    with pytest.raises(DataError, match=r"line 1"):
        parse_conll("no-tag-here\n")


def test_conll_round_trip():
    rng = random.Random(3)
    sents = []
    for i in range(25):
        length = rng.randint(1, 8)
        sents.append(
            LabeledSentence(
                sentence_id=f"id{i}",
                tokens=tuple(f"w{j}" for j in range(length)),
                labels=tuple(random_iob(rng, length)),
            )
        )
    assert parse_conll(sentences_to_conll(sents)) == sents


def test_iob_grammar_property():
    rng = random.Random(11)
    for _ in range(300):
        labels = random_iob(rng, rng.randint(1, 12))
        validate_iob(labels)
        # single mutation to an orphan I- tag must break the grammar
        b_positions = [i for i, t in enumerate(labels) if t.startswith("B-")]
        if not b_positions:
            continue
        pos = rng.choice(b_positions)
        role = labels[pos][2:]
        other = next(r for r in ("ARG0", "ARG1", "ARGM", "V") if r != role)
        mutated = list(labels)
        mutated[pos] = f"I-{other}"
        if pos > 0 and mutated[pos - 1] in (f"B-{other}", f"I-{other}"):
            continue
        with pytest.raises(DataError):
            validate_iob(mutated)


def test_labeled_sentence_length_mismatch():
    with pytest.raises(DataError, match="2 labels for 1 tokens"):
        LabeledSentence(sentence_id="x", tokens=("a",), labels=("O", "O"))


def _bulk_pairs(n, lang, label="agree"):
    return [
        PremisePair(id=f"{lang}{i}", text1=("a",), text2=("b",), label=label, lang=lang)
        for i in range(n)
    ]


def test_corpus_stats_table_shape():
    pairs = _bulk_pairs(8685, "vie") + _bulk_pairs(7500, "eng")
    stats = corpus_stats(pairs)
    assert stats.text1["vie"] == 8685
    assert stats.text1["eng"] == 7500
    assert stats.text2["vie"] == 16185
    assert stats.text2["eng"] == 0
    assert stats.total == 16185


def test_corpus_stats_empty():
    stats = corpus_stats([])
    assert stats.total == 0
    assert all(v == 0 for v in stats.text1.values())
    assert all(v == 0 for v in stats.text2.values())


def test_corpus_stats_vie_only():
    stats = corpus_stats(_bulk_pairs(3, "vie"))
    assert stats.text1 == {"vie": 3, "eng": 0}
    assert stats.text2 == {"vie": 3, "eng": 0}


def test_split_single_stratum_16185():
    pairs = _bulk_pairs(16185, "vie")
    train, val = split_train_val(pairs, 0.8, seed=1)
    assert len(train) == 12948
    assert len(val) == 3237


def test_split_ten_pairs():
    train, val = split_train_val(_bulk_pairs(10, "eng"), 0.8, seed=0)
    assert (len(train), len(val)) == (8, 2)


def test_split_deterministic():
    rng = random.Random(5)
    pairs = [
        PremisePair(
            id=f"p{i}",
            text1=("a",),
            text2=("b",),
            label=rng.choice(LABELS),
            lang=rng.choice(LANGS),
        )
        for i in range(97)
    ]
    assert split_train_val(pairs, 0.8, seed=42) == split_train_val(pairs, 0.8, seed=42)


def test_split_stratified_properties():
    rng = random.Random(9)
    for _ in range(20):
        pairs = [
            PremisePair(
                id=f"p{i}",
                text1=("a",),
                text2=("b",),
                label=rng.choice(LABELS),
                lang=rng.choice(LANGS),
            )
            for i in range(rng.randint(1, 120))
        ]
        ratio = rng.choice([0.5, 0.7, 0.8])
        train, val = split_train_val(pairs, ratio, seed=rng.randint(0, 999))
        assert sorted(p.id for p in train + val) == sorted(p.id for p in pairs)
        for label in LABELS:
            for lang in LANGS:
                stratum = [p for p in pairs if p.label == label and p.lang == lang]
                got = [p for p in train if p.label == label and p.lang == lang]
                assert len(got) == int(ratio * len(stratum))


def test_split_bad_ratio():
    with pytest.raises(DataError):
        split_train_val(_bulk_pairs(4, "vie"), 1.0, seed=0)
    with pytest.raises(DataError):
        split_train_val(_bulk_pairs(4, "vie"), 0.0, seed=0)


def test_label_inventory():
    inv = LabelInventory.from_label_sequences([("B-V", "I-V", "O"), ("B-ARG0", "O", "O")])
    assert inv.tag_to_id["O"] == 0
    assert inv.roles == ("ARG0", "V")
    assert len(inv.tag_to_id) == 5
    assert {inv.id_to_tag[i] for i in inv.tag_to_id.values()} == set(inv.tag_to_id)
    assert inv.encode(["O", "B-V"]) == [0, inv.tag_to_id["B-V"]]
    with pytest.raises(DataError, match="not in label inventory"):
        inv.encode(["B-ARG9"])


def test_label_inventory_requires_verb_role():
    with pytest.raises(DataError, match="must contain the 'V' role"):
        LabelInventory.from_label_sequences([("B-ARG0", "O")])
