from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from softlex.config import TrainConfig
from softlex.errors import ConfigurationError, FormatError, NumericError
from softlex.lexicon import build_lexicon, count_frequencies
from softlex.model import Tagger
from softlex.synth import generate
from softlex.train import (
    AdamaxState,
    Dataset,
    TaggedSentence,
    adamax_step,
    build_label_vocab,
    clip_gradients,
    decode_entities,
    evaluate,
    fit,
    read_conll,
    score_entities,
    write_conll,
)

FIXTURES = Path(__file__).parent / "fixtures"


# ------------------------------------------------------------------ CoNLL


def test_two_sentence_fixture():
    ds = read_conll(FIXTURES / "two_sentences.conll")
    assert len(ds) == 2
    assert [len(s.chars) for s in ds.sentences] == [5, 4]
    assert ds.stats() == {"sentences": 2, "chars": 9}
    assert ds.sentences[1].chars == "中山西路"


def test_illegal_tag_names_line(tmp_path):
    path = tmp_path / "bad.conll"
    path.write_text("张\tB-PER\n三\tE-PER\n\n北\tX-PER\n", encoding="utf-8")
    with pytest.raises(FormatError) as info:
        read_conll(path)
    assert info.value.line == 4 and "X-PER" in str(info.value)


@pytest.mark.parametrize(
    "body,line",
    [("a\tM-LOC\nb\tE-LOC\n", 1), ("a\tB-LOC\nb\tE-PER\n", 2), ("a\tB-LOC\nb\tO\n", 2), ("a\tB-LOC\n", 1)],
)
def test_ill_formed_sequences(tmp_path, body, line):
    path = tmp_path / "bad.conll"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(FormatError) as info:
        read_conll(path)
    assert info.value.line == line


def test_empty_sentences_are_skipped_with_warning(tmp_path, caplog):
    path = tmp_path / "gaps.conll"
    path.write_text("a\tO\n\n\n\nb\tS-PER\n", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        ds = read_conll(path)
    assert [s.chars for s in ds.sentences] == ["a", "b"]
    assert "empty sentence" in caplog.text


def test_conll_round_trip(tmp_path):
    corpus = generate(3, n_train=40, n_dev=1, n_test=1)
    path = tmp_path / "rt.conll"
    write_conll(path, corpus.train.sentences)
    back = read_conll(path)
    assert back.sentences == corpus.train.sentences
    write_conll(tmp_path / "again.conll", back.sentences)
    assert (tmp_path / "again.conll").read_bytes() == path.read_bytes()


def test_label_vocab_order():
    ds = Dataset([TaggedSentence("ab", ["B-PER", "E-PER"]), TaggedSentence("c", ["S-LOC"])])
    assert list(build_label_vocab([ds])) == ["O"] + [f"{p}-LOC" for p in "BMES"] + [f"{p}-PER" for p in "BMES"]


# --------------------------------------------------------------- decoding


def test_decode_entities_examples():
    assert decode_entities(["B-LOC", "M-LOC", "M-LOC", "E-LOC"]) == [(1, 4, "LOC")]
    assert decode_entities(["S-PER", "O", "B-LOC", "E-LOC"]) == [(1, 1, "PER"), (3, 4, "LOC")]
    assert decode_entities(["M-LOC", "E-LOC"]) == []
    assert decode_entities(["B-LOC", "E-PER", "B-PER", "M-PER"]) == []
    assert decode_entities(["B-LOC", "S-PER", "E-LOC"]) == [(2, 2, "PER")]


def test_scoring_examples():
    gold = [["B-LOC", "E-LOC", "O", "O"]]
    assert score_entities(gold, gold).f1 == 1.0
    m = score_entities(gold, [["B-LOC", "E-LOC", "S-PER", "O"]])
    assert (m.precision, m.recall) == (0.5, 1.0) and abs(m.f1 - 2 / 3) < 1e-15
    m = score_entities(gold, [["O"] * 4])
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    assert m.per_type["LOC"] == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


# ---------------------------------------------------------------- Adamax


def test_adamax_zero_gradient_is_a_no_op():
    params = {"w": np.array([0.5, -1.0])}
    adamax_step(params, {"w": np.zeros(2)}, AdamaxState(), 1, TrainConfig())
    assert params["w"].tolist() == [0.5, -1.0]


def test_adamax_hand_example():
    params = {"w": np.array([0.0])}
    state = AdamaxState()
    adamax_step(params, {"w": np.array([1.0])}, state, 1, TrainConfig(lr=0.002))
    assert abs(state.m["w"][0] - 0.1) < 1e-15 and state.u["w"][0] == 1.0
    # (0.002 / (1 - 0.9)) * 0.1 / (1 + 1e-8)
    assert abs(params["w"][0] + 0.002) < 1e-10


def test_adamax_rejects_non_finite():
    with pytest.raises(NumericError):
        adamax_step({"w": np.zeros(1)}, {"w": np.array([np.inf])}, AdamaxState(), 1, TrainConfig())
    with pytest.raises(ConfigurationError):
        adamax_step({"w": np.zeros(1)}, {"w": np.zeros(1)}, AdamaxState(), 0, TrainConfig())


def test_adamax_trajectories_repeat():
    def run():
        rng = np.random.default_rng(0)
        params = {"w": rng.normal(size=5)}
        state = AdamaxState()
        out = []
        for t in range(1, 20):
            adamax_step(params, {"w": np.sin(params["w"] * t)}, state, t, TrainConfig())
            out.append(params["w"].copy())
        return np.array(out)

    assert run().tobytes() == run().tobytes()


def test_clip_gradients():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_gradients(grads, 1.0) == 5.0
    assert abs(np.hypot(grads["a"][0], grads["b"][0]) - 1.0) < 1e-9


# ----------------------------------------------------------------- fitting


@pytest.fixture(scope="module")
def tiny_corpus():
    corpus = generate(5, n_train=20, n_dev=10, n_test=10, n_entities=30, n_fillers=20, n_distractors=10)
    return corpus, build_lexicon(corpus.lexicon_words)


def test_overfit_twenty_sentences(tiny_corpus):
    corpus, lex = tiny_corpus
    cfg = TrainConfig(hidden_size=50, epochs=30, batch_size=4, dropout=0.0, lr=0.01, patience=30, seed=2)
    # dev = train, so the restored best-dev weights are the best at memorizing
    result = fit(cfg, corpus.train, corpus.train, lex, embeddings={"word": corpus.word_vectors})
    losses = [r["loss"] for r in result.log]
    assert len(losses) == 30
    assert losses[-1] <= 0.1 * losses[0]
    assert evaluate(result.model, corpus.train).f1 == 1.0


def test_zero_learning_rate_changes_nothing(tiny_corpus):
    corpus, lex = tiny_corpus
    cfg = TrainConfig(hidden_size=16, epochs=3, lr=0.0, patience=5)
    fresh = Tagger.build(
        cfg, corpus.train.texts() + corpus.dev.texts(), _labels(corpus), lex, _freq(corpus, lex)
    )
    result = fit(cfg, corpus.train, corpus.dev, lex)
    for k, v in fresh.params.items():
        assert np.array_equal(v, result.model.params[k]), k
    assert len({r["dev_f1"] for r in result.log}) == 1


def _labels(corpus):
    vocab = build_label_vocab([corpus.train, corpus.dev])
    return sorted(vocab, key=vocab.get)


def _freq(corpus, lex):
    return count_frequencies(lex, corpus.train.texts() + corpus.dev.texts())


def test_same_seed_same_log_and_checkpoint(tiny_corpus, tmp_path):
    corpus, lex = tiny_corpus
    cfg = TrainConfig(hidden_size=16, epochs=3, dropout=0.3, patience=5)
    runs = []
    for k in range(2):
        ckpt, log_path = tmp_path / f"m{k}.bin", tmp_path / f"log{k}.jsonl"
        fit(cfg, corpus.train, corpus.dev, lex, checkpoint=ckpt, log_path=log_path)
        runs.append((ckpt.read_bytes(), Path(str(ckpt) + ".json").read_bytes(), log_path.read_bytes()))
    assert runs[0] == runs[1]
    assert Path(str(tmp_path / "log0.jsonl") + ".timing").exists()


def test_empty_training_set(tiny_corpus):
    corpus, lex = tiny_corpus
    with pytest.raises(ConfigurationError):
        fit(TrainConfig(), Dataset([]), corpus.dev, lex)


def test_evaluate_is_batch_size_independent(tiny_corpus):
    corpus, lex = tiny_corpus
    cfg = TrainConfig(hidden_size=16, epochs=2, patience=5)
    model = fit(cfg, corpus.train, corpus.dev, lex).model
    m1 = evaluate(model, corpus.test, batch_size=1)
    m7 = evaluate(model, corpus.test, batch_size=7)
    assert (m1.precision, m1.recall, m1.f1, m1.per_type) == (m7.precision, m7.recall, m7.f1, m7.per_type)
    shuffled = Dataset(corpus.test.sentences[::-1], corpus.test.label_vocab)
    assert evaluate(model, shuffled).f1 == m1.f1


def test_evaluate_rejects_unknown_labels(tiny_corpus):
    corpus, lex = tiny_corpus
    model = fit(TrainConfig(hidden_size=8, epochs=1), corpus.train, corpus.dev, lex).model
    with pytest.raises(ConfigurationError):
        evaluate(model, Dataset([TaggedSentence("ab", ["B-XYZ", "E-XYZ"])]))


def test_checkpoint_round_trip(tiny_corpus, tmp_path):
    corpus, lex = tiny_corpus
    cfg = replace(TrainConfig(hidden_size=16, epochs=1), encoder=TrainConfig().encoder)
    model = fit(cfg.with_encoder(use_bigram=True), corpus.train, corpus.dev, lex).model
    model.save(tmp_path / "m.bin")
    back = Tagger.load(tmp_path / "m.bin")
    for k, v in model.params.items():
        assert np.array_equal(v, back.params[k], equal_nan=False), k
    texts = corpus.test.texts()
    assert back.predict(texts) == model.predict(texts)
    assert back.cfg == model.cfg and back.labels == model.labels


def test_checkpoint_corruption_is_detected(tmp_path, tiny_corpus):
    corpus, lex = tiny_corpus
    model = fit(TrainConfig(hidden_size=8, epochs=1), corpus.train, corpus.dev, lex).model
    path = tmp_path / "m.bin"
    model.save(path)
    raw = path.read_bytes()
    path.write_bytes(b"X" + raw[1:])
    with pytest.raises(FormatError, match="magic"):
        Tagger.load(path)
    path.write_bytes(raw[:60])
    with pytest.raises(FormatError, match="truncated"):
        Tagger.load(path)


def test_checkpoint_header_layout(tmp_path, tiny_corpus):
    import struct

    corpus, lex = tiny_corpus
    model = fit(TrainConfig(hidden_size=8, epochs=1), corpus.train, corpus.dev, lex).model
    model.save(tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:8] == b"SOFTLEX\x00"
    assert struct.unpack_from("<II", raw, 8) == (1, len(model.params))
    (nlen,) = struct.unpack_from("<H", raw, 16)
    assert raw[18:18 + nlen] == b"char_emb"


def test_config_json_round_trip(tmp_path):
    cfg = TrainConfig(hidden_size=32).with_encoder(pooling_mode="mean", drop_m_group=True)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()), encoding="utf-8")
    assert TrainConfig.from_json(path) == cfg
    with pytest.raises(ConfigurationError):
        TrainConfig.from_dict({"hidden": 3})
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)


def test_every_truncation_is_a_format_error(tmp_path):
    from softlex.model import load_tensors, save_tensors

    path = tmp_path / "t.bin"
    save_tensors(path, {"a": np.arange(6.0).reshape(2, 3), "ids": np.arange(3)})
    raw = path.read_bytes()
    assert load_tensors(path)["ids"].tolist() == [0, 1, 2]
    for k in range(len(raw)):
        path.write_bytes(raw[:k])
        with pytest.raises(FormatError):
            load_tensors(path)
