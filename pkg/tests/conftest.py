"""Shared generators for seeded-random property tests."""

import random

from semrte.aspects import PredictedSequence

ROLE_POOL = ("ARG0", "ARG1", "ARGM", "V")


def random_iob(rng: random.Random, length: int, roles=ROLE_POOL) -> list[str]:
    """A random grammar-valid IOB sequence."""
    labels = []
    pos = 0
    while pos < length:
        if rng.random() < 0.4:
            labels.append("O")
            pos += 1
            continue
        role = rng.choice(roles)
        labels.append(f"B-{role}")
        pos += 1
        while pos < length and rng.random() < 0.5:
            labels.append(f"I-{role}")
            pos += 1
    return labels


def random_single_verb_iob(rng: random.Random, length: int) -> list[str]:
    """Valid IOB row with exactly one verb span."""
    while True:
        labels = random_iob(rng, length)
        n_verbs = sum(1 for i, t in enumerate(labels) if t == "B-V")
        if n_verbs == 1:
            return labels
        if n_verbs == 0:
            spot = rng.randrange(length)
            if labels[spot] == "O":
                labels[spot] = "B-V"
                if spot + 1 < length and labels[spot + 1].startswith("I-"):
                    continue
                return labels


def random_ensemble(rng: random.Random, n_sentences: int, n_models: int):
    """Random tagger outputs: (sequences, tokens_by_id)."""
    tokens_by_id = {}
    sequences = []
    for s in range(n_sentences):
        sid = f"s{s}"
        length = rng.randint(2, 9)
        tokens_by_id[sid] = tuple(f"tok{j}" for j in range(length))
        for model in range(n_models):
            if rng.random() < 0.15:
                continue
            if rng.random() < 0.35:
                labels = random_iob(rng, length)
            else:
                labels = random_single_verb_iob(rng, length)
            sequences.append(
                PredictedSequence(sentence_id=sid, source_model=model, labels=tuple(labels))
            )
    return sequences, tokens_by_id
