"""Compiled kernels against the pure-Python fallback.

Times each hot kernel on both backends plus end-to-end batch-1 inference,
and prints a TSV table (kernel, backend, median microseconds, speedup).

    python benchmarks/bench_kernels.py [--repeats 7]
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from softlex import _kernels
from softlex.config import TrainConfig
from softlex.lexicon import build_lexicon, count_frequencies
from softlex.model import Tagger
from softlex.synth import generate, length_sweep
from softlex.train import build_label_vocab


def _median_us(fn, repeats: int) -> float:
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1e6


def _cases(corpus, lex, model):
    rng = np.random.default_rng(0)
    texts = length_sweep(corpus.test.texts(), per_bucket=20, seed=1)
    em = rng.normal(size=(60, 13))
    trans = rng.normal(size=(15, 15))
    h, d = 200, 100
    W = rng.normal(scale=0.1, size=(4 * h, d + h))
    Zx = rng.normal(size=(60, 1, 4 * h))

    def matcher(k):
        return lambda: [k.match_spans(lex.trie, t) for t in texts]

    def viterbi(k):
        return lambda: k.viterbi(em, trans)

    def partition(k):
        return lambda: k.log_partition(em, trans)

    def lstm(k):
        return lambda: k.lstm_recurrence(Zx, W, d, False)

    def predict(name):
        def run():
            model.backend = name
            model.predict(texts[:40])
        return run

    return [
        ("match_spans (120 sentences)", matcher, False),
        ("viterbi (n=60, |Y|=13)", viterbi, False),
        ("log_partition (n=60, |Y|=13)", partition, False),
        ("lstm_recurrence (T=60, h=200)", lstm, False),
        ("predict batch 1 (40 sentences)", predict, True),
    ]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args(argv)
    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the python backend is available", file=sys.stderr)

    corpus = generate(0, n_train=300, n_dev=10, n_test=200)
    lex = build_lexicon(corpus.lexicon_words)
    freq = count_frequencies(lex, corpus.train.texts())
    vocab = build_label_vocab([corpus.train])
    model = Tagger.build(
        TrainConfig(), corpus.train.texts(), sorted(vocab, key=vocab.get), lex, freq, {"word": corpus.word_vectors}
    )

    print("kernel\tbackend\tmedian_us\tspeedup_vs_python")
    for label, make, by_name in _cases(corpus, lex, model):
        base = None
        for name in backends:
            fn = make(name) if by_name else make(_kernels.get_backend(name))
            us = _median_us(fn, args.repeats)
            base = us if name == "python" else base
            print(f"{label}\t{name}\t{us:.1f}\t{base / us:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
