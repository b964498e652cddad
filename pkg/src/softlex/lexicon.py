"""Lexicon compilation, span matching and word-frequency statistics.

Spans use 1-based inclusive character positions: ``Span(1, 2, w)`` covers the
first two characters of the sentence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigurationError, FormatError

log = logging.getLogger(__name__)


class Span(NamedTuple):
    start: int
    end: int
    word_id: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


class Trie:
    """Character trie in two layouts.

    ``children``/``word_at`` (one dict per node) serve the pure-Python walk.
    The CSR arrays ``child_start``/``child_code``/``child_node`` with sorted
    code points per node serve the compiled walk.
    """

    def __init__(self, words: Sequence[str]):
        children: list[dict[str, int]] = [{}]
        word_at: list[int] = [-1]
        for wid, word in enumerate(words):
            node = 0
            for ch in word:
                nxt = children[node].get(ch)
                if nxt is None:
                    nxt = len(children)
                    children[node][ch] = nxt
                    children.append({})
                    word_at.append(-1)
                node = nxt
            word_at[node] = wid
        self.children = children
        self.word_at = word_at
        self.max_len = max((len(w) for w in words), default=0)

        starts = np.zeros(len(children) + 1, dtype=np.int32)
        codes: list[int] = []
        targets: list[int] = []
        for node, kids in enumerate(children):
            for ch in sorted(kids, key=ord):
                codes.append(ord(ch))
                targets.append(kids[ch])
            starts[node + 1] = len(codes)
        self.child_start = starts
        self.child_code = np.asarray(codes, dtype=np.uint32)
        self.child_node = np.asarray(targets, dtype=np.int32)
        self.word_at_array = np.asarray(word_at, dtype=np.int32)

    @property
    def num_nodes(self) -> int:
        return len(self.children)


@dataclass(frozen=True, eq=False)
class Lexicon:
    words: tuple[str, ...]
    word_ids: dict[str, int]
    trie: Trie = field(repr=False)
    max_word_len: int

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: object) -> bool:
        return word in self.word_ids

    def word(self, word_id: int) -> str:
        return self.words[word_id]

    def match(self, sentence: str) -> list[Span]:
        return match_spans(self, sentence)


def build_lexicon(entries: Iterable[str]) -> Lexicon:
    """Compile ``entries`` into a :class:`Lexicon`.

    Duplicates are dropped, the first occurrence keeping its id. Entries with
    interior whitespace are rejected, naming the 1-based entry (line) number.
    """
    words: list[str] = []
    ids: dict[str, int] = {}
    for lineno, raw in enumerate(entries, start=1):
        word = raw.strip()
        if not word:
            raise ConfigurationError(f"lexicon entry {lineno} is empty")
        if any(ch.isspace() for ch in word):
            raise ConfigurationError(f"lexicon entry {lineno} contains whitespace: {raw!r}")
        if word not in ids:
            ids[word] = len(words)
            words.append(word)
    if not words:
        raise ConfigurationError("lexicon has no entries")
    trie = Trie(words)
    return Lexicon(tuple(words), ids, trie, trie.max_len)


def match_spans(lex: Lexicon, sentence: str, backend: str | None = None) -> list[Span]:
    """Every ``(i, j)`` with ``sentence[i..j]`` in the lexicon, sorted by (start, end)."""
    kernel = _kernels.get_backend(backend).match_spans
    return [Span(*hit) for hit in kernel(lex.trie, sentence)]


def maximal_spans(spans: Sequence[Span]) -> list[Span]:
    """Spans not strictly contained in another span of the same sentence.

    Partial overlaps do not count as containment.
    """
    ordered = sorted(spans, key=lambda s: (s.start, -s.end))
    out = []
    reach = 0
    for sp in ordered:
        # every span visited earlier starts at or before sp.start; with equal
        # starts the longer ones come first, so reach >= end means covered
        if sp.end > reach:
            out.append(sp)
            reach = sp.end
    out.sort(key=lambda s: (s.start, s.end))
    return out


@dataclass(frozen=True)
class FreqTable:
    """Occurrence counts of lexicon words in a statistical corpus."""

    counts: dict[int, int]
    total_sentences: int = 0

    def __getitem__(self, word_id: int) -> int:
        return self.counts.get(word_id, 0)

    def as_array(self, size: int) -> np.ndarray:
        arr = np.zeros(size, dtype=np.int64)
        for wid, c in self.counts.items():
            arr[wid] = c
        return arr


def count_frequencies(lex: Lexicon, corpus: Iterable[str]) -> FreqTable:
    """Count lexicon words in ``corpus``, skipping covered occurrences.

    An occurrence is covered when another match in the same sentence strictly
    contains it; such occurrences add nothing to the count.
    """
    counts: dict[int, int] = {}
    total = 0
    for sentence in corpus:
        total += 1
        if not sentence:
            continue
        for sp in maximal_spans(match_spans(lex, sentence)):
            counts[sp.word_id] = counts.get(sp.word_id, 0) + 1
    return FreqTable(counts, total)


def read_lexicon(path: str | Path) -> tuple[Lexicon, FreqTable | None]:
    """Read a ``word[<TAB>count]`` file.

    Returns the lexicon and, when at least one line carries a count, a
    FreqTable seeded from those counts (missing counts read as 0).
    """
    path = Path(path)
    words: list[str] = []
    seeded: dict[str, int] = {}
    has_counts = False
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            word, sep, count = line.partition("\t")
            word = word.strip()
            if any(ch.isspace() for ch in word):
                raise FormatError(f"lexicon word contains whitespace: {word!r}", path, lineno)
            if sep:
                try:
                    value = int(count.strip())
                except ValueError:
                    raise FormatError(f"bad count {count!r}", path, lineno) from None
                if value < 0:
                    raise FormatError(f"negative count {value}", path, lineno)
                has_counts = True
                seeded[word] = seeded.get(word, 0) + value
            words.append(word)
    if not words:
        raise ConfigurationError(f"{path}: lexicon file has no entries")
    lex = build_lexicon(words)
    if not has_counts:
        return lex, None
    freq = FreqTable({lex.word_ids[w]: c for w, c in seeded.items() if c}, 0)
    return lex, freq


def write_lexicon(path: str | Path, lex: Lexicon, freq: FreqTable | None = None) -> None:
    """Write one word per line; with ``freq`` every line carries its count."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for wid, word in enumerate(lex.words):
            if freq is None:
                fh.write(f"{word}\n")
            else:
                fh.write(f"{word}\t{freq[wid]}\n")
