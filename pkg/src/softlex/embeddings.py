"""Embedding tables for characters, bigrams and lexicon words."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, FormatError

log = logging.getLogger(__name__)

UNK = "<unk>"
NONE_TOKEN = "<none>"
END = "</s>"
SPECIALS = (UNK, NONE_TOKEN, END)


@dataclass
class EmbeddingTable:
    """Token vocabulary plus a ``(rows, dim)`` matrix.

    The three special tokens UNK, NONE and END always have rows. Lookups of
    unknown tokens fall back to the UNK row.
    """

    vocab: dict[str, int]
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] <= 0:
            raise ConfigurationError(f"embedding matrix must be 2-D with dim > 0, got {self.matrix.shape}")
        if len(self.vocab) != self.matrix.shape[0]:
            raise ConfigurationError("vocabulary size and matrix rows differ")
        missing = [t for t in SPECIALS if t not in self.vocab]
        if missing:
            raise ConfigurationError(f"embedding table lacks special tokens {missing}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def unk_row(self) -> int:
        return self.vocab[UNK]

    @property
    def none_row(self) -> int:
        return self.vocab[NONE_TOKEN]

    @property
    def end_row(self) -> int:
        return self.vocab[END]

    def index(self, token: str) -> int:
        return self.vocab.get(token, self.vocab[UNK])

    def indices(self, tokens: Iterable[str]) -> np.ndarray:
        get, unk = self.vocab.get, self.vocab[UNK]
        return np.fromiter((get(t, unk) for t in tokens), dtype=np.int64)

    def tokens(self) -> list[str]:
        out = [""] * len(self.vocab)
        for tok, row in self.vocab.items():
            out[row] = tok
        return out


def lookup(table: EmbeddingTable, token: str) -> np.ndarray:
    """Row of ``token``, or the UNK row when it is not in the vocabulary."""
    return table.matrix[table.index(token)]


def _with_specials(tokens: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for tok in tokens:
        if tok in seen:
            continue
        seen.add(tok)
        out.append(tok)
    for tok in SPECIALS:
        if tok not in seen:
            out.append(tok)
    return out


def init_random(vocab: Sequence[str], dim: int, seed: int, dtype=np.float64) -> EmbeddingTable:
    """Uniform ``[-sqrt(3/dim), sqrt(3/dim)]`` table over ``vocab`` plus special rows."""
    if dim <= 0:
        raise ConfigurationError("embedding dim must be positive")
    if len(vocab) == 0:
        raise ConfigurationError("cannot initialize an embedding table over an empty vocabulary")
    tokens = _with_specials(vocab)
    scale = math.sqrt(3.0 / dim)
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-scale, scale, size=(len(tokens), dim)).astype(dtype)
    return EmbeddingTable({t: i for i, t in enumerate(tokens)}, matrix)


def _is_header(parts: list[str]) -> bool:
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def load_embeddings(path: str | Path, expected_dim: int | None = None) -> EmbeddingTable:
    """Read a word2vec text file (optional ``count dim`` header line).

    Special rows that the file does not define are appended as zeros.
    """
    path = Path(path)
    tokens: list[str] = []
    rows: list[list[float]] = []
    dim = None
    declared = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and _is_header(parts):
                declared, dim = int(parts[0]), int(parts[1])
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise FormatError("row has no vector values", path, lineno)
            if len(values) != dim:
                raise FormatError(f"expected {dim} values, found {len(values)}", path, lineno)
            try:
                vec = [float(v) for v in values]
            except ValueError:
                raise FormatError("non-numeric vector value", path, lineno) from None
            tokens.append(token)
            rows.append(vec)
    if dim is None:
        raise FormatError("no embedding rows found", path)
    if expected_dim is not None and dim != expected_dim:
        raise ConfigurationError(f"{path}: embedding dim {dim} differs from expected {expected_dim}")
    if declared is not None and declared != len(rows):
        log.warning("%s: header declares %d rows, found %d", path, declared, len(rows))
    vocab: dict[str, int] = {}
    kept = []
    for tok, vec in zip(tokens, rows):
        if tok in vocab:
            log.warning("%s: duplicate token %r ignored", path, tok)
            continue
        vocab[tok] = len(kept)
        kept.append(vec)
    for tok in SPECIALS:
        if tok not in vocab:
            vocab[tok] = len(kept)
            kept.append([0.0] * dim)
    return EmbeddingTable(vocab, np.asarray(kept, dtype=np.float64))


def save_embeddings(path: str | Path, table: EmbeddingTable, digits: int = 9) -> None:
    """Write ``table`` in word2vec text format with ``digits`` significant digits."""
    fmt = f"%.{digits}g"
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{table.num_rows} {table.dim}\n")
        for tok, row in zip(table.tokens(), table.matrix):
            fh.write(tok + " " + " ".join(fmt % v for v in row) + "\n")


def align_embeddings(
    tokens: Sequence[str], dim: int, seed: int, pretrained: EmbeddingTable | None = None
) -> EmbeddingTable:
    """Random table over ``tokens`` with rows copied from ``pretrained`` where available."""
    table = init_random(tokens, dim, seed)
    if pretrained is None:
        return table
    if pretrained.dim != dim:
        raise ConfigurationError(f"pretrained dim {pretrained.dim} differs from configured {dim}")
    hits = 0
    for tok, row in table.vocab.items():
        src = pretrained.vocab.get(tok)
        if src is not None and tok not in SPECIALS:
            table.matrix[row] = pretrained.matrix[src]
            hits += 1
    log.info("pretrained embeddings cover %d / %d tokens", hits, len(tokens))
    return table
