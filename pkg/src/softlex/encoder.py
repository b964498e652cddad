"""Per-character lexicon features: BMES word sets, ExSoftword flags, pooling.

Word sets hold lexicon word ids. The placeholder word ``NONE`` (id ``-1``)
fills every set that would otherwise be empty.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, IntegrityError, PreconditionError
from .lexicon import Lexicon, Span, match_spans

NONE = -1
GROUPS = ("B", "M", "E", "S")
EXSOFT_LABELS = ("B", "M", "E", "S", "O")
FEATURE_KINDS = ("none", "exsoftword", "softlexicon")


@dataclass(frozen=True)
class WordSets:
    """The four word sets of one character; each a sorted tuple of word ids."""

    b: tuple[int, ...] = (NONE,)
    m: tuple[int, ...] = (NONE,)
    e: tuple[int, ...] = (NONE,)
    s: tuple[int, ...] = (NONE,)

    def group(self, name: str) -> tuple[int, ...]:
        return getattr(self, name.lower())

    def words(self, name: str) -> tuple[int, ...]:
        """Members of set ``name`` without the NONE placeholder."""
        return tuple(w for w in self.group(name) if w != NONE)


class SoftLexFeature(NamedTuple):
    vb: np.ndarray
    vm: np.ndarray | None
    ve: np.ndarray
    vs: np.ndarray


@dataclass(frozen=True)
class EncoderConfig:
    """Character-representation options.

    ``feature`` picks the lexicon feature: "softlexicon" (pooled word sets),
    "exsoftword" (5-dim multi-hot) or "none" (characters only). The remaining
    flags are the ablation switches of the SoftLexicon feature.
    """

    feature: str = "softlexicon"
    use_bigram: bool = False
    pooling_mode: str = "weighted"
    normalization: str = "overall"
    drop_m_group: bool = False
    merge_groups: bool = False
    none_frequency: int = 1
    unseen_word_frequency_floor: int = 1

    def __post_init__(self):
        if self.feature not in FEATURE_KINDS:
            raise ConfigurationError(f"feature must be one of {FEATURE_KINDS}, got {self.feature!r}")
        if self.pooling_mode not in ("mean", "weighted"):
            raise ConfigurationError(f"pooling_mode must be 'mean' or 'weighted', got {self.pooling_mode!r}")
        if self.normalization not in ("overall", "per_group"):
            raise ConfigurationError(
                f"normalization must be 'overall' or 'per_group', got {self.normalization!r}"
            )
        if self.none_frequency <= 0:
            raise ConfigurationError("none_frequency must be positive")
        if self.unseen_word_frequency_floor < 0:
            raise ConfigurationError("unseen_word_frequency_floor must be non-negative")

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(g for g in GROUPS if not (self.drop_m_group and g == "M"))

    @property
    def num_slots(self) -> int:
        """Number of pooled vectors concatenated per character."""
        return 1 if self.merge_groups else len(self.groups)

    def lexicon_dim(self, word_dim: int) -> int:
        if self.feature == "softlexicon":
            return self.num_slots * word_dim
        if self.feature == "exsoftword":
            return len(EXSOFT_LABELS)
        return 0


def _check_spans(n: int, spans: Iterable[Span]) -> list[Span]:
    spans = list(spans)
    for sp in spans:
        if not (1 <= sp.start <= sp.end <= n):
            raise PreconditionError(f"span {tuple(sp)} out of range for sentence length {n}")
    return spans


def bmes_sets(n: int, spans: Iterable[Span]) -> list[WordSets]:
    """Categorize matched words into B/M/E/S sets for each of ``n`` characters."""
    spans = _check_spans(n, spans)
    b: list[set[int]] = [set() for _ in range(n)]
    m: list[set[int]] = [set() for _ in range(n)]
    e: list[set[int]] = [set() for _ in range(n)]
    s: list[set[int]] = [set() for _ in range(n)]
    for sp in spans:
        i, k, w = sp.start - 1, sp.end - 1, sp.word_id
        if i == k:
            s[i].add(w)
            continue
        b[i].add(w)
        e[k].add(w)
        for j in range(i + 1, k):
            m[j].add(w)

    def fill(x: set[int]) -> tuple[int, ...]:
        return tuple(sorted(x)) if x else (NONE,)

    return [WordSets(fill(b[t]), fill(m[t]), fill(e[t]), fill(s[t])) for t in range(n)]


def restore_spans(sets: Sequence[WordSets], lex: Lexicon) -> set[Span]:
    """Invert :func:`bmes_sets`: recover the matched spans from B and S sets.

    The recovered spans must reproduce the given M and E sets exactly,
    otherwise :class:`IntegrityError` is raised.
    """
    n = len(sets)
    spans: set[Span] = set()
    for t, ws in enumerate(sets):
        for w in ws.words("B"):
            if not 0 <= w < len(lex):
                raise IntegrityError(f"unknown word id {w} at position {t + 1}")
            length = len(lex.words[w])
            if length < 2:
                raise IntegrityError(f"single-character word {w} in B set at position {t + 1}")
            end = t + length
            if end > n:
                raise IntegrityError(f"B entry {lex.words[w]!r} at {t + 1} runs past the sentence end")
            spans.add(Span(t + 1, end, w))
        for w in ws.words("S"):
            if not 0 <= w < len(lex) or len(lex.words[w]) != 1:
                raise IntegrityError(f"invalid S entry {w} at position {t + 1}")
            spans.add(Span(t + 1, t + 1, w))
    rebuilt = bmes_sets(n, spans)
    for t, (got, want) in enumerate(zip(sets, rebuilt)):
        if got.e != want.e or got.m != want.m:
            raise IntegrityError(f"word sets at position {t + 1} are inconsistent with their B/S entries")
    return spans


def exsoftword(spans: Iterable[Span], n: int) -> np.ndarray:
    """5-dim multi-hot (B, M, E, S, O) segmentation flags, shape ``(n, 5)``."""
    spans = _check_spans(n, spans)
    flags = np.zeros((n, 5), dtype=np.int8)
    for sp in spans:
        i, k = sp.start - 1, sp.end - 1
        if i == k:
            flags[i, 3] = 1
        else:
            flags[i, 0] = 1
            flags[k, 2] = 1
            flags[i + 1:k, 1] = 1
    flags[:, 4] = flags[:, :4].sum(axis=1) == 0
    return flags


def exsoftword_preimages(flags: np.ndarray | Sequence[Iterable[str]]) -> list[frozenset[tuple[int, int]]]:
    """Every set of (start, end) spans whose ExSoftword flags equal ``flags``.

    ``flags`` is an ``(n, 5)`` array or a sequence of label sets such as
    ``[{"B"}, {"B", "M", "E"}]``. Exhaustive over all span subsets, so only
    meant for short sequences.
    """
    if not isinstance(flags, np.ndarray):
        rows = []
        for labels in flags:
            row = [1 if lab in labels else 0 for lab in EXSOFT_LABELS]
            if not any(row):
                row[4] = 1
            rows.append(row)
        flags = np.asarray(rows, dtype=np.int8)
    n = flags.shape[0]
    candidates = [(i, j) for i in range(1, n + 1) for j in range(i, n + 1)]
    out = []
    for r in range(len(candidates) + 1):
        for combo in itertools.combinations(candidates, r):
            got = exsoftword([Span(i, j, 0) for i, j in combo], n)
            if np.array_equal(got, flags):
                out.append(frozenset(combo))
    return out


def effective_frequencies(freq_counts: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    return np.maximum(np.asarray(freq_counts, dtype=np.float64), float(cfg.unseen_word_frequency_floor))


def pool_coefficients(
    sets: WordSets, zeff: np.ndarray, cfg: EncoderConfig, merge: bool | None = None
) -> list[tuple[int, int, float]]:
    """Pooling weights of one character as ``(slot, word_id, coefficient)``.

    ``zeff`` holds effective (already floored) frequencies indexed by word
    id. ``slot`` indexes the output vector the word contributes to; when
    merging (``cfg.merge_groups`` unless ``merge`` overrides it) every word
    lands in slot 0.
    """
    merged = cfg.merge_groups if merge is None else merge
    groups = [sets.group(g) for g in cfg.groups]
    out: list[tuple[int, int, float]] = []

    def z(w: int) -> float:
        if w == NONE:
            return float(cfg.none_frequency)
        if not 0 <= w < len(zeff):
            raise IntegrityError(f"unknown word id {w}")
        return float(zeff[w])

    if cfg.pooling_mode == "mean":
        for g, members in enumerate(groups):
            slot = 0 if merged else g
            for w in members:
                out.append((slot, w, 1.0 / len(members)))
        return out

    if cfg.normalization == "overall":
        total = sum(z(w) for members in groups for w in members)
        if total <= 0:
            raise PreconditionError("total word frequency of the four sets is zero")
        scale = len(groups) / total
        for g, members in enumerate(groups):
            slot = 0 if merged else g
            for w in members:
                out.append((slot, w, scale * z(w)))
        return out

    for g, members in enumerate(groups):
        slot = 0 if merged else g
        total = sum(z(w) for w in members)
        if total <= 0:
            raise PreconditionError(f"total word frequency of set {cfg.groups[g]} is zero")
        for w in members:
            out.append((slot, w, z(w) / total))
    return out


def _word_row(w: int, word_emb, word_rows: np.ndarray | None) -> int:
    if w == NONE:
        return word_emb.none_row
    if word_rows is None:
        if not 0 <= w < word_emb.num_rows:
            raise IntegrityError(f"word id {w} has no embedding row")
        return w
    if not 0 <= w < len(word_rows):
        raise IntegrityError(f"word id {w} has no embedding row")
    return int(word_rows[w])


def pool(sets: WordSets, freq, word_emb, cfg: EncoderConfig, word_rows: np.ndarray | None = None) -> SoftLexFeature:
    """Condense the four word sets of one character into pooled vectors.

    ``freq`` is a FreqTable or an array of raw counts indexed by word id.
    ``word_rows`` maps word ids to rows of ``word_emb``; by default word id
    ``k`` is row ``k``. With ``drop_m_group`` the ``vm`` field is None.
    Merging of the groups is left to :func:`augment`.
    """
    if isinstance(freq, np.ndarray):
        counts = freq
    else:
        members = [w for g in GROUPS for w in sets.group(g)]
        counts = freq.as_array(max(members + list(freq.counts) + [-1]) + 1)
    zeff = effective_frequencies(counts, cfg)
    vecs = np.zeros((len(cfg.groups), word_emb.dim))
    for g, w, coef in pool_coefficients(sets, zeff, cfg, merge=False):
        vecs[g] += coef * word_emb.matrix[_word_row(w, word_emb, word_rows)]
    by_group = dict(zip(cfg.groups, vecs))
    return SoftLexFeature(by_group["B"], by_group.get("M"), by_group["E"], by_group["S"])


def augment(
    char_vec: np.ndarray,
    bigram_vec: np.ndarray | None,
    feat: SoftLexFeature | np.ndarray | None,
    cfg: EncoderConfig,
) -> np.ndarray:
    """Concatenate the character vector with bigram and lexicon features."""
    parts = [np.asarray(char_vec, dtype=np.float64)]
    if cfg.use_bigram:
        if bigram_vec is None:
            raise ConfigurationError("use_bigram is set but no bigram vector was given")
        parts.append(np.asarray(bigram_vec, dtype=np.float64))
    elif bigram_vec is not None:
        raise ConfigurationError("bigram vector given but use_bigram is off")
    if cfg.feature == "softlexicon":
        if not isinstance(feat, SoftLexFeature):
            raise ConfigurationError("softlexicon feature expects a SoftLexFeature")
        vecs = [feat.vb, feat.ve, feat.vs] if cfg.drop_m_group else [feat.vb, feat.vm, feat.ve, feat.vs]
        if any(v is None for v in vecs):
            raise ConfigurationError("SoftLexFeature is missing the M vector")
        dims = {len(v) for v in vecs}
        if len(dims) != 1:
            raise ConfigurationError(f"pooled vectors differ in length: {sorted(dims)}")
        if cfg.merge_groups:
            parts.append(np.sum(vecs, axis=0))
        else:
            parts.extend(np.asarray(v, dtype=np.float64) for v in vecs)
    elif cfg.feature == "exsoftword":
        feat = np.asarray(feat, dtype=np.float64)
        if feat.shape != (len(EXSOFT_LABELS),):
            raise ConfigurationError(f"ExSoftword feature must have 5 dims, got {feat.shape}")
        parts.append(feat)
    elif feat is not None:
        raise ConfigurationError("lexicon feature given but feature kind is 'none'")
    return np.concatenate(parts)


@dataclass
class SentenceFeatures:
    """Lexicon features of one sentence, computed once and cached.

    ``lex_pos``/``lex_slot``/``lex_word``/``lex_coef`` list every pooled word
    contribution; only the embedding lookup has to be redone when the word
    table changes.
    """

    text: str
    spans: list[Span]
    sets: list[WordSets] = field(repr=False)
    exsoft: np.ndarray = field(repr=False)
    lex_pos: np.ndarray = field(repr=False)
    lex_slot: np.ndarray = field(repr=False)
    lex_word: np.ndarray = field(repr=False)
    lex_coef: np.ndarray = field(repr=False)


def encode_sentence(
    text: str, lex: Lexicon, zeff: np.ndarray, cfg: EncoderConfig, backend: str | None = None
) -> SentenceFeatures:
    """Match ``text`` against ``lex`` and build all per-character features."""
    n = len(text)
    spans = match_spans(lex, text, backend)
    sets = bmes_sets(n, spans)
    flags = exsoftword(spans, n)
    pos, slots, words, coefs = [], [], [], []
    if cfg.feature == "softlexicon":
        for t, ws in enumerate(sets):
            for slot, w, coef in pool_coefficients(ws, zeff, cfg):
                pos.append(t)
                slots.append(slot)
                words.append(w)
                coefs.append(coef)
    return SentenceFeatures(
        text,
        spans,
        sets,
        flags,
        np.asarray(pos, dtype=np.int64),
        np.asarray(slots, dtype=np.int64),
        np.asarray(words, dtype=np.int64),
        np.asarray(coefs, dtype=np.float64),
    )


def dump_features(text: str, lex: Lexicon, out: IO[str]) -> None:
    """Write one TAB-separated line per character: char, B, M, E, S words, flags."""
    n = len(text)
    spans = match_spans(lex, text)
    sets = bmes_sets(n, spans)
    flags = exsoftword(spans, n)

    def names(ids: tuple[int, ...]) -> str:
        return ",".join("NONE" if w == NONE else lex.words[w] for w in ids)

    for ch, ws, row in zip(text, sets, flags):
        fields = [ch, names(ws.b), names(ws.m), names(ws.e), names(ws.s), "".join(str(int(v)) for v in row)]
        out.write("\t".join(fields) + "\n")
