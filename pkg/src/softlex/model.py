"""The tagger: vocabularies, lexicon features and network parameters together."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import net
from .config import TrainConfig
from .embeddings import END, EmbeddingTable, align_embeddings
from .encoder import SentenceFeatures, effective_frequencies, encode_sentence
from .errors import ConfigurationError, FormatError
from .lexicon import FreqTable, Lexicon, build_lexicon

CKPT_MAGIC = b"SOFTLEX\x00"
CKPT_VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2, np.dtype("<i8"): 3}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def bigrams(text: str) -> list[str]:
    """Character bigrams ``c_i c_{i+1}``; the last character pairs with END."""
    return [text[i:i + 2] for i in range(len(text) - 1)] + [text[-1:] + END] if text else []


@dataclass
class Example:
    text: str
    char_ids: np.ndarray
    bigram_ids: np.ndarray | None
    features: SentenceFeatures
    gold: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.text)


class Tagger:
    """BiLSTM-CRF tagger over lexicon-augmented character representations."""

    def __init__(
        self,
        cfg: TrainConfig,
        labels: Sequence[str],
        chars: EmbeddingTable,
        lex: Lexicon,
        freq: FreqTable,
        bigram_table: EmbeddingTable | None = None,
        word_table: EmbeddingTable | None = None,
        params: dict[str, np.ndarray] | None = None,
    ):
        self.cfg = cfg
        self.labels = list(labels)
        self.label_ids = {t: i for i, t in enumerate(self.labels)}
        self.chars = chars
        self.bigram_table = bigram_table
        self.word_table = word_table
        self.lex = lex
        self.freq = freq
        enc = cfg.encoder
        if enc.use_bigram and bigram_table is None:
            raise ConfigurationError("use_bigram requires a bigram table")
        if enc.feature == "softlexicon" and word_table is None:
            raise ConfigurationError("softlexicon features require a word table")
        self.zeff = effective_frequencies(freq.as_array(len(lex)), enc)
        if word_table is not None:
            rows = [word_table.vocab.get(w, word_table.unk_row) for w in lex.words]
            self.word_rows = np.asarray(rows + [word_table.none_row], dtype=np.int64)
        else:
            self.word_rows = None
        self.params = params if params is not None else self._init_params()
        self.backend: str | None = None

    # ---------------------------------------------------------------- setup

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        enc = self.cfg.encoder
        d = self.chars.dim
        if enc.use_bigram:
            d += self.bigram_table.dim
        wd = self.word_table.dim if self.word_table is not None else self.cfg.word_dim
        return d + enc.lexicon_dim(wd)

    def _init_params(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.cfg.seed + 7919)
        h = self.cfg.hidden_size
        fwd = net.LstmParams.init(self.input_dim, h, rng)
        bwd = net.LstmParams.init(self.input_dim, h, rng)
        scale = np.sqrt(6.0 / (2 * h + self.num_labels))
        params = {"char_emb": self.chars.matrix}
        if self.cfg.encoder.use_bigram:
            params["bigram_emb"] = self.bigram_table.matrix
        if self.cfg.encoder.feature == "softlexicon":
            params["word_emb"] = self.word_table.matrix
        params.update(
            fwd_W=fwd.W,
            fwd_b=fwd.b,
            bwd_W=bwd.W,
            bwd_b=bwd.b,
            emit_W=rng.uniform(-scale, scale, size=(self.num_labels, 2 * h)),
            emit_b=np.zeros(self.num_labels),
            trans=net.init_transitions(self.num_labels),
        )
        return params

    @classmethod
    def build(
        cls,
        cfg: TrainConfig,
        texts: Sequence[str],
        labels: Sequence[str],
        lex: Lexicon,
        freq: FreqTable,
        pretrained: dict[str, EmbeddingTable] | None = None,
    ) -> "Tagger":
        """Fresh tagger with vocabularies drawn from ``texts``.

        ``pretrained`` may hold "char", "bigram" and "word" tables whose rows
        seed the matching tokens.
        """
        pretrained = pretrained or {}
        enc = cfg.encoder
        char_vocab = sorted({ch for t in texts for ch in t})
        chars = align_embeddings(char_vocab, cfg.char_dim, cfg.seed, pretrained.get("char"))
        bigram_table = None
        if enc.use_bigram:
            bg_vocab = sorted({bg for t in texts for bg in bigrams(t)})
            bigram_table = align_embeddings(bg_vocab, cfg.bigram_dim, cfg.seed + 1, pretrained.get("bigram"))
        word_table = None
        if enc.feature == "softlexicon":
            word_table = align_embeddings(list(lex.words), cfg.word_dim, cfg.seed + 2, pretrained.get("word"))
        return cls(cfg, labels, chars, lex, freq, bigram_table, word_table)

    # ------------------------------------------------------------- features

    def prepare(self, text: str, tags: Sequence[str] | None = None) -> Example:
        if not text:
            raise ConfigurationError("cannot prepare an empty sentence")
        char_ids = self.chars.indices(text)
        bigram_ids = None
        if self.bigram_table is not None:
            table = self.bigram_table
            bigram_ids = table.indices(bigrams(text))
            last = text[-1] + END
            if last not in table.vocab:
                bigram_ids[-1] = table.end_row
        feats = encode_sentence(text, self.lex, self.zeff, self.cfg.encoder, self.backend)
        gold = None
        if tags is not None:
            if len(tags) != len(text):
                raise ConfigurationError("tag sequence length differs from the sentence")
            try:
                gold = np.asarray([self.label_ids[t] for t in tags], dtype=np.int64)
            except KeyError as exc:
                raise ConfigurationError(f"tag {exc.args[0]!r} is not in the model's label set") from None
        return Example(text, char_ids, bigram_ids, feats, gold)

    def make_batch(self, examples: Sequence[Example]) -> net.Batch:
        B = len(examples)
        lengths = np.asarray([len(e) for e in examples], dtype=np.int64)
        T = int(lengths.max())
        char_ids = np.full((T, B), self.chars.unk_row, dtype=np.int64)
        bigram_ids = None
        if self.bigram_table is not None:
            bigram_ids = np.full((T, B), self.bigram_table.unk_row, dtype=np.int64)
        gold = None
        if all(e.gold is not None for e in examples):
            gold = np.zeros((T, B), dtype=np.int64)
        enc = self.cfg.encoder
        exsoft = np.zeros((T, B, 5), dtype=np.float64) if enc.feature == "exsoftword" else None
        slots = enc.num_slots
        idx_parts, row_parts, coef_parts = [], [], []
        for b, ex in enumerate(examples):
            n = len(ex)
            char_ids[:n, b] = ex.char_ids
            if bigram_ids is not None:
                bigram_ids[:n, b] = ex.bigram_ids
            if gold is not None:
                gold[:n, b] = ex.gold
            f = ex.features
            if exsoft is not None:
                exsoft[:n, b] = f.exsoft
            if enc.feature == "softlexicon":
                idx_parts.append((f.lex_pos * B + b) * slots + f.lex_slot)
                row_parts.append(self.word_rows[f.lex_word])  # NONE (-1) hits the last entry
                coef_parts.append(f.lex_coef)
        batch = net.Batch(char_ids, lengths, bigram_ids=bigram_ids, exsoft=exsoft, gold=gold)
        if enc.feature == "softlexicon":
            batch.lex_index = np.concatenate(idx_parts)
            batch.lex_row = np.concatenate(row_parts)
            batch.lex_coef = np.concatenate(coef_parts)
            batch.num_slots = slots
        return batch

    # ------------------------------------------------------------ inference

    def decode_examples(self, examples: Sequence[Example], batch_size: int = 64) -> list[list[str]]:
        out = []
        for k in range(0, len(examples), batch_size):
            batch = self.make_batch(examples[k:k + batch_size])
            out.extend([self.labels[i] for i in path] for path in net.decode(self.params, batch, self.backend))
        return out

    def predict(self, texts: Sequence[str], batch_size: int = 1) -> list[list[str]]:
        """Tag raw sentences (lexicon matching and features included)."""
        return self.decode_examples([self.prepare(t) for t in texts], batch_size)

    def astype(self, dtype) -> "Tagger":
        """Copy whose parameters use ``dtype`` (e.g. float32 for benchmarking)."""
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        twin = Tagger(
            self.cfg, self.labels, self.chars, self.lex, self.freq, self.bigram_table, self.word_table, params
        )
        twin.backend = self.backend
        return twin

    # ----------------------------------------------------------- checkpoint

    def save(self, path: str | Path) -> None:
        """Write the binary tensor file ``path`` and the JSON sidecar ``path.json``."""
        path = Path(path)
        save_tensors(path, {k: self.params[k] for k in net.PARAM_ORDER if k in self.params})
        meta = {
            "format": "softlex-checkpoint",
            "version": CKPT_VERSION,
            "config": self.cfg.to_dict(),
            "labels": self.labels,
            "chars": self.chars.tokens(),
            "bigrams": self.bigram_table.tokens() if self.bigram_table is not None else None,
            "words": self.word_table.tokens() if self.word_table is not None else None,
            "lexicon": list(self.lex.words),
            "frequencies": [int(self.freq[i]) for i in range(len(self.lex))],
        }
        with sidecar_path(path).open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, ensure_ascii=False, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Tagger":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(2, "No such file", str(path))
        with sidecar_path(path).open(encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("format") != "softlex-checkpoint" or meta.get("version") != CKPT_VERSION:
            raise FormatError("unsupported checkpoint sidecar", sidecar_path(path))
        params = load_tensors(path)
        cfg = TrainConfig.from_dict(meta["config"])

        def table(tokens, key):
            if tokens is None:
                return None
            return EmbeddingTable({t: i for i, t in enumerate(tokens)}, params[key])

        lex = build_lexicon(meta["lexicon"])
        freq = FreqTable({i: c for i, c in enumerate(meta["frequencies"]) if c}, 0)
        chars = table(meta["chars"], "char_emb")
        bigram_table = table(meta["bigrams"], "bigram_emb")
        words = meta["words"]
        if words is not None and "word_emb" not in params:
            raise FormatError("checkpoint lists word vocabulary but has no word_emb tensor", path)
        word_table = table(words, "word_emb")
        return cls(cfg, meta["labels"], chars, lex, freq, bigram_table, word_table, params)


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Versioned binary container: header, then named row-major sections."""
    with Path(path).open("wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr)
            dt = arr.dtype.newbyteorder("<")
            if dt not in _DTYPE_CODES:
                raise ConfigurationError(f"cannot store dtype {arr.dtype} for {name}")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype(dt, copy=False).tobytes(order="C"))


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise FormatError("not a softlex checkpoint (bad magic)", path)
    if len(data) < 16:
        raise FormatError("checkpoint header is truncated", path)
    version, count = struct.unpack_from("<II", data, 8)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", path)
    pos = 16
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            code, ndim = struct.unpack_from("<BB", data, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            dt = _CODE_DTYPES[code]
            size = int(np.prod(shape)) * dt.itemsize
            if pos + size > len(data):
                raise FormatError(f"section {name!r} is truncated", path)
            out[name] = np.frombuffer(data, dtype=dt, count=int(np.prod(shape)), offset=pos).reshape(shape).copy()
            pos += size
    except (struct.error, KeyError) as exc:
        raise FormatError(f"corrupt checkpoint: {exc}", path) from None
    return out
