"""CoNLL ingestion, Adamax training loop and entity-level evaluation."""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import net
from .config import TrainConfig
from .embeddings import EmbeddingTable
from .errors import ConfigurationError, FormatError, NumericError
from .lexicon import FreqTable, Lexicon, count_frequencies
from .model import Tagger

log = logging.getLogger(__name__)

TAG_RE = re.compile(r"^(?:O|[BMES]-\S+)$")


@dataclass
class TaggedSentence:
    chars: str
    tags: list[str]

    def __post_init__(self):
        if len(self.chars) != len(self.tags):
            raise ConfigurationError("characters and tags differ in length")


@dataclass
class Dataset:
    sentences: list[TaggedSentence]
    label_vocab: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.label_vocab:
            self.label_vocab = build_label_vocab([self])

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def num_chars(self) -> int:
        return sum(len(s.chars) for s in self.sentences)

    def texts(self) -> list[str]:
        return [s.chars for s in self.sentences]

    def stats(self) -> dict[str, int]:
        return {"sentences": len(self), "chars": self.num_chars}


def build_label_vocab(datasets: Iterable[Dataset]) -> dict[str, int]:
    """``O`` first, then B/M/E/S tags grouped by entity type in sorted order."""
    types = sorted({t[2:] for d in datasets for s in d.sentences for t in s.tags if t != "O"})
    labels = ["O"] + [f"{p}-{ty}" for ty in types for p in "BMES"]
    return {t: i for i, t in enumerate(labels)}


def scheme_violation(tags: Sequence[str]) -> int | None:
    """Index of the first tag that breaks BMES well-formedness, or None."""
    open_type = None
    for i, tag in enumerate(tags):
        if not TAG_RE.match(tag):
            return i
        prefix, ty = tag[0], tag[2:]
        if open_type is not None:
            if prefix not in "ME" or ty != open_type:
                return i
            if prefix == "E":
                open_type = None
            continue
        if prefix in "ME":
            return i
        if prefix == "B":
            open_type = ty
    return len(tags) - 1 if open_type is not None else None


def read_conll(path: str | Path) -> Dataset:
    """Read ``char<TAB>tag`` lines; blank lines separate sentences."""
    path = Path(path)
    sentences: list[TaggedSentence] = []
    chars: list[str] = []
    tags: list[str] = []
    lines: list[int] = []

    def flush():
        if not chars:
            return
        bad = scheme_violation(tags)
        if bad is not None:
            raise FormatError(f"ill-formed BMES sequence at tag {tags[bad]!r}", path, lines[bad])
        sentences.append(TaggedSentence("".join(chars), list(tags)))

    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                if not chars and lineno > 1:
                    log.warning("%s:%d: empty sentence skipped", path, lineno)
                flush()
                chars, tags, lines = [], [], []
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2 or len(parts[0]) != 1:
                raise FormatError(f"expected 'char<TAB>tag', got {line!r}", path, lineno)
            ch, tag = parts[0], parts[1].strip()
            if not TAG_RE.match(tag):
                raise FormatError(f"tag {tag!r} is outside the BMES scheme", path, lineno)
            chars.append(ch)
            tags.append(tag)
            lines.append(lineno)
    flush()
    if not sentences:
        log.warning("%s: no sentences read", path)
    ds = Dataset(sentences)
    log.info("%s: %d sentences, %d chars", path, len(ds), ds.num_chars)
    return ds


def write_conll(path: str | Path, sentences: Iterable[TaggedSentence]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for s in sentences:
            for ch, tag in zip(s.chars, s.tags):
                fh.write(f"{ch}\t{tag}\n")
            fh.write("\n")


# ------------------------------------------------------------- evaluation


def decode_entities(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    """Entities as 1-based inclusive ``(start, end, type)`` triples.

    Strict decoding: only complete ``S`` and ``B (M)* E`` runs of one type
    count; any fragment left open or started mid-entity is dropped.
    """
    out = []
    start = None
    open_type = None
    for i, tag in enumerate(tags, start=1):
        prefix, ty = (tag[0], tag[2:]) if tag != "O" and len(tag) > 2 else ("O", "")
        if open_type is not None and prefix in "ME" and ty == open_type:
            if prefix == "E":
                out.append((start, i, ty))
                open_type = None
            continue
        open_type = None
        if prefix == "S":
            out.append((i, i, ty))
        elif prefix == "B":
            start, open_type = i, ty
    return out


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    per_type: dict[str, dict[str, float]] = field(default_factory=dict)
    sentences_per_sec: float = 0.0

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_type": self.per_type,
            "sentences_per_sec": self.sentences_per_sec,
        }


def _prf(correct: int, predicted: int, gold: int) -> tuple[float, float, float]:
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def score_entities(gold_tags: Sequence[Sequence[str]], pred_tags: Sequence[Sequence[str]]) -> Metrics:
    """Exact-match precision/recall/F1 over (start, end, type) triples."""
    counts: dict[str, list[int]] = {}
    tot = [0, 0, 0]
    for g, p in zip(gold_tags, pred_tags, strict=True):
        gs, ps = set(decode_entities(g)), set(decode_entities(p))
        for ent in gs | ps:
            c = counts.setdefault(ent[2], [0, 0, 0])
            hit = ent in gs and ent in ps
            c[0] += hit
            c[1] += ent in ps
            c[2] += ent in gs
        tot[0] += len(gs & ps)
        tot[1] += len(ps)
        tot[2] += len(gs)
    per_type = {}
    for ty in sorted(counts):
        p, r, f = _prf(*counts[ty])
        per_type[ty] = {"precision": p, "recall": r, "f1": f}
    return Metrics(*_prf(*tot), per_type=per_type)


def evaluate(model: Tagger, data: Dataset, batch_size: int | None = None, examples=None) -> Metrics:
    """Viterbi-decode ``data`` and score it against the gold tags."""
    unknown = set(data.label_vocab) - set(model.label_ids)
    if unknown:
        raise ConfigurationError(f"dataset uses labels unknown to the model: {sorted(unknown)}")
    if examples is None:
        examples = [model.prepare(s.chars) for s in data.sentences]
    t0 = time.perf_counter()
    preds = model.decode_examples(examples, batch_size or model.cfg.eval_batch_size)
    elapsed = time.perf_counter() - t0
    metrics = score_entities([s.tags for s in data.sentences], preds)
    metrics.sentences_per_sec = len(data) / elapsed if elapsed > 0 else 0.0
    return metrics


# ---------------------------------------------------------------- training


@dataclass
class AdamaxState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    u: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamax_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamaxState,
    t: int,
    cfg: TrainConfig,
) -> None:
    """In-place Adamax update of every parameter that has a gradient."""
    if t < 1:
        raise ConfigurationError("Adamax step counter starts at 1")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r} at step {t}")
    lr_t = cfg.lr / (1.0 - cfg.beta1 ** t)
    for name, g in grads.items():
        theta = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.u[name] = np.zeros_like(theta)
        m, u = state.m[name], state.u[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        np.maximum(cfg.beta2 * u, np.abs(g), out=u)
        theta -= lr_t * m / (u + cfg.eps)
    state.step = t


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= factor
    return total


@dataclass
class FitResult:
    model: Tagger
    log: list[dict]
    timings: list[float]
    best_epoch: int
    best_dev: Metrics | None


def _log_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def fit(
    cfg: TrainConfig,
    train: Dataset,
    dev: Dataset,
    lex: Lexicon,
    freq: FreqTable | None = None,
    embeddings: dict[str, EmbeddingTable] | None = None,
    checkpoint: str | Path | None = None,
    log_path: str | Path | None = None,
) -> FitResult:
    """Train a tagger with Adamax and early stopping on dev F1.

    Without ``freq`` the word frequencies are counted on train + dev. The
    best-dev parameters are restored at the end (and saved to
    ``checkpoint`` when given). ``log_path`` receives one JSON record per
    epoch; wall-clock times go to ``<log_path>.timing`` so that the main log
    is reproducible byte for byte.
    """
    if len(train) == 0:
        raise ConfigurationError("training set is empty")
    labels_map = build_label_vocab([train, dev])
    labels = sorted(labels_map, key=labels_map.get)
    if freq is None:
        freq = count_frequencies(lex, train.texts() + dev.texts())
    model = Tagger.build(cfg, train.texts() + dev.texts(), labels, lex, freq, embeddings)
    train_ex = [model.prepare(s.chars, s.tags) for s in train.sentences]
    dev_ex = [model.prepare(s.chars) for s in dev.sentences]

    shuffle_rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng(cfg.seed + 1)
    state = AdamaxState()
    records: list[dict] = []
    timings: list[float] = []
    best_f1, best_epoch, best_params, best_dev = -1.0, 0, None, None
    stale = 0
    log_fh = Path(log_path).open("w", encoding="utf-8", newline="\n") if log_path else None
    time_fh = Path(str(log_path) + ".timing").open("w", encoding="utf-8", newline="\n") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(len(train_ex))
            total = 0.0
            for k in range(0, len(order), cfg.batch_size):
                chunk = [train_ex[i] for i in order[k:k + cfg.batch_size]]
                batch = model.make_batch(chunk)
                loss, tape = net.forward(model.params, batch, cfg.dropout, drop_rng)
                grads = net.backward(tape)
                clip_gradients(grads, cfg.clip_norm)
                adamax_step(model.params, grads, state, state.step + 1, cfg)
                total += loss * len(chunk)
            train_loss = total / len(train_ex)
            if dev_ex:
                dev_m = evaluate(model, dev, examples=dev_ex)
            else:
                dev_m = Metrics(0.0, 0.0, 0.0)
            wall = time.perf_counter() - t0
            improved = dev_m.f1 > best_f1
            if improved:
                best_f1, best_epoch, best_dev = dev_m.f1, epoch, dev_m
                best_params = {k: v.copy() for k, v in model.params.items()}
                stale = 0
            else:
                stale += 1
            record = {
                "epoch": epoch,
                "loss": round(train_loss, 10),
                "dev_precision": round(dev_m.precision, 10),
                "dev_recall": round(dev_m.recall, 10),
                "dev_f1": round(dev_m.f1, 10),
                "best": improved,
            }
            records.append(record)
            timings.append(wall)
            log.info("epoch %d loss %.4f dev F1 %.4f (%.1fs)", epoch, train_loss, dev_m.f1, wall)
            if log_fh:
                log_fh.write(_log_line(record) + "\n")
                time_fh.write(_log_line({"epoch": epoch, "wall_seconds": wall}) + "\n")
            if stale >= cfg.patience:
                log.info("early stop after %d epochs without dev improvement", stale)
                break
    finally:
        if log_fh:
            log_fh.close()
            time_fh.close()
    if best_params is not None:
        for k, v in best_params.items():
            model.params[k][...] = v
    if checkpoint is not None:
        model.save(checkpoint)
    return FitResult(model, records, timings, best_epoch, best_dev)
