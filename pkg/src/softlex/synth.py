"""Synthetic NER corpus with a lexicon and type-clustered word vectors.

Stands in for the public benchmark data at desk scale. Entity words come
from the lexicon; part of them never occur in training, so tagging them
relies on lexicon evidence. Distractor words straddle entity boundaries,
and the generated word vectors cluster by entity type the way pretrained
embeddings cluster by meaning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import SPECIALS, EmbeddingTable
from .train import Dataset, TaggedSentence

TYPES = ("PER", "LOC", "ORG")


@dataclass
class SyntheticCorpus:
    train: Dataset
    dev: Dataset
    test: Dataset
    lexicon_words: list[str]
    word_vectors: EmbeddingTable
    entity_words: dict[str, str]


def _word(rng, pool, lo, hi, taken):
    while True:
        w = "".join(rng.choice(pool, size=rng.integers(lo, hi + 1)))
        if w not in taken:
            taken.add(w)
            return w


def generate(
    seed: int = 0,
    n_train: int = 3000,
    n_dev: int = 500,
    n_test: int = 500,
    n_entities: int = 500,
    n_fillers: int = 250,
    n_distractors: int = 250,
    seen_fraction: float = 0.6,
    word_dim: int = 50,
    trigger_prob: float = 0.6,
) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    codepoints = rng.choice(np.arange(0x4E00, 0x9FA5), size=420, replace=False)
    pool = np.array([chr(c) for c in codepoints])
    entity_pool, filler_pool, trigger_pool = pool[:300], pool[150:400], pool[400:]

    taken: set[str] = set()
    entity_type: dict[str, str] = {}
    for k in range(n_entities):
        entity_type[_word(rng, entity_pool, 2, 4, taken)] = TYPES[k % len(TYPES)]
    entities = list(entity_type)
    fillers = [_word(rng, filler_pool, 1, 3, taken) for _ in range(n_fillers)]
    triggers = {ty: [_word(rng, trigger_pool, 2, 2, taken) for _ in range(3)] for ty in TYPES}

    # distractors cross an entity boundary: entity suffix + next filler's head
    distractors: list[str] = []
    follow: dict[str, list[str]] = {}
    while len(distractors) < n_distractors:
        ent = entities[rng.integers(len(entities))]
        fil = fillers[rng.integers(len(fillers))]
        cut = rng.integers(1, len(ent))
        word = ent[cut:] + fil[: rng.integers(1, len(fil) + 1)]
        if len(word) < 2 or word in taken:
            continue
        taken.add(word)
        distractors.append(word)
        follow.setdefault(ent, []).append(fil)

    order = rng.permutation(len(entities))
    n_seen = int(round(seen_fraction * len(entities)))
    seen = [entities[i] for i in order[:n_seen]]

    def sentence(pool_entities):
        chars: list[str] = []
        tags: list[str] = []

        def put(text, tag_type=None):
            chars.extend(text)
            if tag_type is None:
                tags.extend("O" * len(text))
            elif len(text) == 1:
                tags.append(f"S-{tag_type}")
            else:
                tags.extend([f"B-{tag_type}"] + [f"M-{tag_type}"] * (len(text) - 2) + [f"E-{tag_type}"])

        n_ent = rng.integers(1, 4)
        for _ in range(n_ent):
            for _ in range(rng.integers(1, 4)):
                put(fillers[rng.integers(len(fillers))])
            ent = pool_entities[rng.integers(len(pool_entities))]
            ty = entity_type[ent]
            if rng.random() < trigger_prob:
                put(triggers[ty][rng.integers(3)])
            put(ent, ty)
            nxt = follow.get(ent)
            if nxt and rng.random() < 0.5:
                put(nxt[rng.integers(len(nxt))])
        for _ in range(rng.integers(0, 3)):
            put(fillers[rng.integers(len(fillers))])
        return TaggedSentence("".join(chars), tags)

    train = Dataset([sentence(seen) for _ in range(n_train)])
    dev = Dataset([sentence(entities) for _ in range(n_dev)])
    test = Dataset([sentence(entities) for _ in range(n_test)])

    lexicon = entities + fillers + distractors + [w for ws in triggers.values() for w in ws]

    centers = {}
    for ty in TYPES + ("O",):
        v = rng.normal(size=word_dim)
        centers[ty] = v / np.linalg.norm(v)
    rows = []
    for w in lexicon:
        center = centers[entity_type.get(w, "O")]
        rows.append(center + rng.normal(scale=0.1, size=word_dim))
    tokens = lexicon + list(SPECIALS)
    rows.extend(np.zeros(word_dim) for _ in SPECIALS)
    vectors = EmbeddingTable({t: i for i, t in enumerate(tokens)}, np.asarray(rows))
    return SyntheticCorpus(train, dev, test, lexicon, vectors, entity_type)


def length_sweep(
    texts: list[str],
    per_bucket: int = 40,
    buckets: tuple[tuple[int, int | None], ...] = ((1, 20), (21, 40), (41, 60), (61, 80), (81, 100), (101, 120)),
    seed: int = 0,
) -> list[str]:
    """Sentences covering every length bucket, built by joining ``texts``.

    Each output sentence is a concatenation of randomly drawn inputs
    truncated to a length drawn uniformly inside its bucket.
    """
    rng = np.random.default_rng(seed)
    pool = [t for t in texts if t]
    if not pool:
        raise ValueError("length_sweep needs non-empty texts")
    out = []
    for lo, hi in buckets:
        hi = hi if hi is not None else lo + 20
        for _ in range(per_bucket):
            target = int(rng.integers(lo, hi + 1))
            parts, size = [], 0
            while size < target:
                t = pool[rng.integers(len(pool))]
                parts.append(t)
                size += len(t)
            out.append("".join(parts)[:target])
    return out
