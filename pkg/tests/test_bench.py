from __future__ import annotations

import json

import numpy as np
import pytest

from softlex import _kernels
from softlex.bench import DEFAULT_BUCKETS, bench_throughput, bucketed_order, parse_buckets
from softlex.config import TrainConfig
from softlex.errors import ConfigurationError, PreconditionError
from softlex.experiments import Comparison, paired_test
from softlex.lexicon import build_lexicon, count_frequencies
from softlex.model import Tagger
from softlex.synth import generate, length_sweep
from softlex.train import build_label_vocab


@pytest.fixture(scope="module")
def setup():
    corpus = generate(1, n_train=60, n_dev=5, n_test=60)
    lex = build_lexicon(corpus.lexicon_words)
    freq = count_frequencies(lex, corpus.train.texts())
    vocab = build_label_vocab([corpus.train])
    model = Tagger.build(
        TrainConfig(hidden_size=16), corpus.train.texts(), sorted(vocab, key=vocab.get), lex, freq,
        {"word": corpus.word_vectors},
    )
    texts = length_sweep(corpus.test.texts(), per_bucket=6, seed=2)
    return model, texts


def test_parse_buckets():
    assert parse_buckets("1-20,21-40,41-") == ((1, 20), (21, 40), (41, None))
    with pytest.raises(ConfigurationError):
        parse_buckets("a-b")


def test_length_sweep_fills_every_bucket(setup):
    _, texts = setup
    for lo, hi in DEFAULT_BUCKETS:
        assert sum(lo <= len(t) <= (hi or 10**9) for t in texts) == 6


def test_report_structure_and_predictions(setup):
    model, texts = setup
    report = bench_throughput(model, texts, batch_size=1, warmup=100, passes=2)
    assert [b.label for b in report.buckets] == ["1-20", "21-40", "41-60", "61-80", "81-100", "101+"]
    assert sum(b.sentences for b in report.buckets) == report.measured_sentences == len(texts)
    assert all(b.sentences_per_sec > 0 and len(b.pass_rates) == 2 for b in report.buckets)
    assert report.timer.startswith("time.perf_counter")
    # the benchmark returns the same tags as plain prediction
    assert report.predictions == model.predict(bucketed_order(texts))
    d = json.loads(report.to_json())
    assert d["variant"] == "+SoftLexicon" and "predictions" not in d
    tsv = report.plot_tsv().splitlines()
    assert tsv[0] == "bucket_midpoint\tsentences_per_sec" and tsv[1].startswith("10.5\t")


def test_batched_and_threaded_predictions_match(setup):
    model, texts = setup
    base = bench_throughput(model, texts, batch_size=1, warmup=0, passes=1).predictions
    assert bench_throughput(model, texts, batch_size=8, warmup=0, passes=1).predictions == base
    threaded = bench_throughput(model, texts, batch_size=2, warmup=0, passes=1, threads=2)
    assert threaded.predictions == base and threaded.threads == 2


def test_backends_predict_identically(setup):
    model, texts = setup
    outs = []
    for name in _kernels.available_backends():
        model.backend = name
        outs.append(model.predict(texts))
    model.backend = None
    assert all(o == outs[0] for o in outs)


def test_float32_predictions_close(setup):
    model, texts = setup
    f32 = model.astype(np.float32)
    assert f32.params["fwd_W"].dtype == np.float32
    same = sum(a == b for a, b in zip(f32.predict(texts), model.predict(texts)))
    assert same >= 0.95 * len(texts)


def test_bench_errors(setup):
    model, _ = setup
    with pytest.raises(PreconditionError):
        bench_throughput(model, ["x" * 500], buckets=((1, 20),))
    with pytest.raises(ConfigurationError):
        bench_throughput(model, ["ab"], batch_size=0)


def test_paired_test_direction():
    t, p = paired_test([0.9, 0.8, 0.85, 0.95], [0.7, 0.75, 0.6, 0.8])
    assert t > 0 and p < 0.05
    _, p = paired_test([0.7, 0.75, 0.6, 0.8], [0.9, 0.8, 0.85, 0.95])
    assert p > 0.5
    assert paired_test([0.5, 0.6], [0.4, 0.5])[1] == 0.0  # constant positive difference


def test_comparison_table():
    comp = Comparison({"a": [0.5, 0.7], "b": [0.6, 0.8]}, [1, 2])
    lines = comp.table().splitlines()
    assert lines[0].split("\t")[:4] == ["variant", "mean_f1", "std_f1", "delta"]
    assert lines[2].split("\t")[3] == "+0.1000"
