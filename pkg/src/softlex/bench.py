"""Inference throughput against sentence length.

Timing covers the whole inference path of the tagger: lexicon matching,
feature construction, the BiLSTM forward pass and Viterbi decoding. Model
loading and file I/O are outside the timed region.
"""

from __future__ import annotations

import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .errors import ConfigurationError, PreconditionError
from .model import Tagger

DEFAULT_BUCKETS: tuple[tuple[int, int | None], ...] = (
    (1, 20),
    (21, 40),
    (41, 60),
    (61, 80),
    (81, 100),
    (101, None),
)


def parse_buckets(spec: str) -> tuple[tuple[int, int | None], ...]:
    """Parse ``"1-20,21-40,41-"`` into bucket bounds (open upper end allowed)."""
    out = []
    for part in spec.split(","):
        lo, _, hi = part.strip().partition("-")
        try:
            out.append((int(lo), int(hi) if hi else None))
        except ValueError:
            raise ConfigurationError(f"bad bucket {part!r}") from None
    return tuple(out)


def variant_name(model: Tagger) -> str:
    enc = model.cfg.encoder
    name = {"none": "char-only", "exsoftword": "+ExSoftword", "softlexicon": "+SoftLexicon"}[enc.feature]
    return name + ("+bichar" if enc.use_bigram else "")


@dataclass
class BucketResult:
    low: int
    high: int | None
    sentences: int
    sentences_per_sec: float
    pass_rates: list[float] = field(default_factory=list)

    @property
    def label(self) -> str:
        return f"{self.low}-{self.high}" if self.high is not None else f"{self.low}+"

    @property
    def midpoint(self) -> float:
        return (self.low + self.high) / 2 if self.high is not None else float(self.low)


@dataclass
class BenchReport:
    buckets: list[BucketResult]
    sentences_per_sec: float
    batch_size: int
    variant: str
    warmup_sentences: int
    measured_sentences: int
    passes: int
    threads: int = 1
    backend: str = "default"
    dtype: str = "float64"
    timer: str = "time.perf_counter (monotonic)"
    predictions: list[list[str]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("predictions")
        for b, src in zip(d["buckets"], self.buckets):
            b["label"] = src.label
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def plot_tsv(self) -> str:
        lines = ["bucket_midpoint\tsentences_per_sec"]
        lines += [f"{b.midpoint:g}\t{b.sentences_per_sec:.3f}" for b in self.buckets if b.sentences]
        return "\n".join(lines) + "\n"


def _bucket_of(n: int, buckets) -> int | None:
    for k, (lo, hi) in enumerate(buckets):
        if n >= lo and (hi is None or n <= hi):
            return k
    return None


def _run(model: Tagger, texts: Sequence[str], batch_size: int, pool: ThreadPoolExecutor | None):
    chunks = [texts[k:k + batch_size] for k in range(0, len(texts), batch_size)]

    def infer(chunk):
        return model.decode_examples([model.prepare(t) for t in chunk], batch_size)

    if pool is None:
        results = [infer(c) for c in chunks]
    else:
        results = list(pool.map(infer, chunks))
    return [tags for r in results for tags in r]


def bench_throughput(
    model: Tagger,
    sentences: Sequence[str],
    batch_size: int = 1,
    buckets: Sequence[tuple[int, int | None]] = DEFAULT_BUCKETS,
    warmup: int = 100,
    passes: int = 3,
    threads: int = 1,
) -> BenchReport:
    """Sentences per second per length bucket, median over ``passes`` runs.

    The first ``warmup`` inferences (cycling through ``sentences``) are run
    untimed. Sentences falling in no bucket are not measured.
    """
    if batch_size < 1 or passes < 1 or threads < 1:
        raise ConfigurationError("batch_size, passes and threads must be positive")
    if warmup < 0:
        raise ConfigurationError("warmup must be non-negative")
    grouped: list[list[str]] = [[] for _ in buckets]
    for s in sentences:
        k = _bucket_of(len(s), buckets)
        if k is not None and s:
            grouped[k].append(s)
    measured = sum(len(g) for g in grouped)
    if measured == 0:
        raise PreconditionError("no sentences to measure")

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        pool_texts = [s for g in grouped for s in g]
        warm = [pool_texts[k % len(pool_texts)] for k in range(warmup)]
        if warm:
            _run(model, warm, batch_size, pool)
        rates: list[list[float]] = [[] for _ in buckets]
        overall: list[float] = []
        predictions: dict[int, list[list[str]]] = {}
        for _ in range(passes):
            total_time = 0.0
            for k, group in enumerate(grouped):
                if not group:
                    continue
                t0 = time.perf_counter()
                tags = _run(model, group, batch_size, pool)
                dt = time.perf_counter() - t0
                total_time += dt
                rates[k].append(len(group) / dt)
                predictions[k] = tags
            overall.append(measured / total_time)
    finally:
        if pool is not None:
            pool.shutdown()

    results = []
    for (lo, hi), group, r in zip(buckets, grouped, rates):
        rate = statistics.median(r) if r else 0.0
        results.append(BucketResult(lo, hi, len(group), rate, r))
    params = model.params.get("fwd_W")
    return BenchReport(
        buckets=results,
        sentences_per_sec=statistics.median(overall),
        batch_size=batch_size,
        variant=variant_name(model),
        warmup_sentences=warmup,
        measured_sentences=measured,
        passes=passes,
        threads=threads,
        backend=model.backend or "default",
        dtype=str(params.dtype) if params is not None else "float64",
        predictions=[tags for k in sorted(predictions) for tags in predictions[k]],
    )


def bucketed_order(sentences: Sequence[str], buckets=DEFAULT_BUCKETS) -> list[str]:
    """Sentences in the order :func:`bench_throughput` reports predictions."""
    grouped: list[list[str]] = [[] for _ in buckets]
    for s in sentences:
        k = _bucket_of(len(s), buckets)
        if k is not None and s:
            grouped[k].append(s)
    return [s for g in grouped for s in g]
