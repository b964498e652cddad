"""``softlex`` command line: train, eval, predict, bench, freq, features."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import _kernels
from .bench import DEFAULT_BUCKETS, bench_throughput, parse_buckets
from .config import TrainConfig
from .embeddings import load_embeddings, save_embeddings
from .encoder import dump_features
from .errors import SoftlexError
from .lexicon import count_frequencies, read_lexicon, write_lexicon
from .model import Tagger
from .train import Dataset, TaggedSentence, evaluate, fit, read_conll, score_entities, write_conll

log = logging.getLogger("softlex")


def _read_lines(path: str) -> list[str]:
    with Path(path).open(encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("encoder")
    g.add_argument("--pooling", choices=("mean", "weighted"))
    g.add_argument("--normalization", choices=("overall", "per-group"))
    g.add_argument("--drop-m-group", action="store_true", default=None)
    g.add_argument("--merge-groups", action="store_true", default=None)
    g.add_argument("--use-bigram", action="store_true", default=None)
    kind = g.add_mutually_exclusive_group()
    kind.add_argument("--exsoftword-only", action="store_true", help="5-dim ExSoftword feature instead of SoftLexicon")
    kind.add_argument("--char-only", action="store_true", help="no lexicon feature")


def _config(args) -> TrainConfig:
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    changes = {}
    for name in ("seed", "batch_size", "epochs", "hidden_size", "lr", "dropout", "patience"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    cfg = replace(cfg, **changes)
    enc = {}
    if args.pooling:
        enc["pooling_mode"] = args.pooling
    if args.normalization:
        enc["normalization"] = args.normalization.replace("-", "_")
    for flag, key in (("drop_m_group", "drop_m_group"), ("merge_groups", "merge_groups"), ("use_bigram", "use_bigram")):
        if getattr(args, flag):
            enc[key] = True
    if args.exsoftword_only:
        enc["feature"] = "exsoftword"
    elif args.char_only:
        enc["feature"] = "none"
    return cfg.with_encoder(**enc) if enc else cfg


def _load_model(args) -> Tagger:
    model = Tagger.load(args.checkpoint)
    if getattr(args, "float32", False):
        model = model.astype("float32")
    model.backend = getattr(args, "backend", None)
    return model


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------------ commands


def cmd_train(args) -> int:
    cfg = _config(args)
    train, dev = read_conll(args.train), read_conll(args.dev)
    lex, freq = read_lexicon(args.lexicon)
    embeddings = {}
    for key in ("char", "bigram", "word"):
        path = getattr(args, f"embeddings_{key}")
        if path:
            embeddings[key] = load_embeddings(path)
    if "word" in embeddings:
        cfg = replace(cfg, word_dim=embeddings["word"].dim)
    if "char" in embeddings:
        cfg = replace(cfg, char_dim=embeddings["char"].dim)
    if "bigram" in embeddings:
        cfg = replace(cfg, bigram_dim=embeddings["bigram"].dim)
    result = fit(cfg, train, dev, lex, freq, embeddings, checkpoint=args.checkpoint, log_path=args.log)
    summary = {"best_epoch": result.best_epoch, "epochs_run": len(result.log)}
    if result.best_dev is not None:
        summary["dev"] = result.best_dev.to_dict()
    if args.test:
        summary["test"] = evaluate(result.model, read_conll(args.test)).to_dict()
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    gold = read_conll(args.test)
    if args.pred:
        pred = read_conll(args.pred)
        if [s.chars for s in pred.sentences] != [s.chars for s in gold.sentences]:
            raise SoftlexError(f"{args.pred}: sentences differ from {args.test}")
        metrics = score_entities([s.tags for s in gold.sentences], [s.tags for s in pred.sentences])
    elif args.checkpoint:
        metrics = evaluate(_load_model(args), gold, batch_size=args.batch_size)
    else:
        raise SoftlexError("eval needs --checkpoint or --pred")
    print(json.dumps(metrics.to_dict(), indent=1, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    model = _load_model(args)
    texts = _read_lines(args.input)
    tags = model.predict(texts, batch_size=args.batch_size)
    out = Path(args.output) if args.output else None
    sentences = [TaggedSentence(t, tg) for t, tg in zip(texts, tags)]
    if out is not None:
        write_conll(out, sentences)
    else:
        for s in sentences:
            sys.stdout.write("".join(f"{c}\t{t}\n" for c, t in zip(s.chars, s.tags)) + "\n")
    return 0


def cmd_bench(args) -> int:
    model = _load_model(args)
    if args.input:
        texts = _read_lines(args.input)
    elif args.test:
        texts = read_conll(args.test).texts()
    else:
        raise SoftlexError("bench needs --input or --test")
    buckets = parse_buckets(args.buckets) if args.buckets else DEFAULT_BUCKETS
    report = bench_throughput(
        model, texts, batch_size=args.batch_size, buckets=buckets, warmup=args.warmup, passes=args.passes,
        threads=args.threads,
    )
    if args.tsv:
        Path(args.tsv).write_text(report.plot_tsv(), encoding="utf-8")
    _emit(report.to_json() + "\n", args.json)
    return 0


def cmd_freq(args) -> int:
    lex, _ = read_lexicon(args.lexicon)
    texts = read_conll(args.train).texts()
    if args.dev:
        texts += read_conll(args.dev).texts()
    freq = count_frequencies(lex, texts)
    write_lexicon(args.output, lex, freq)
    log.info("counted %d lexicon words over %d sentences", len(lex), len(texts))
    return 0


def cmd_features(args) -> int:
    lex, _ = read_lexicon(args.lexicon)
    out = Path(args.output).open("w", encoding="utf-8") if args.output else sys.stdout
    try:
        for text in _read_lines(args.input):
            dump_features(text, lex, out)
            out.write("\n")
    finally:
        if args.output:
            out.close()
    return 0


def cmd_synth(args) -> int:
    from .synth import generate, length_sweep

    corpus = generate(args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "dev", "test"):
        ds: Dataset = getattr(corpus, name)
        write_conll(out / f"{name}.conll", ds.sentences)
    (out / "lexicon.txt").write_text("".join(w + "\n" for w in corpus.lexicon_words), encoding="utf-8")
    save_embeddings(out / "words.vec", corpus.word_vectors)
    sweep = length_sweep(corpus.test.texts(), seed=args.seed)
    (out / "bench.txt").write_text("".join(t + "\n" for t in sweep), encoding="utf-8")
    (out / "test.txt").write_text("".join(t + "\n" for t in corpus.test.texts()), encoding="utf-8")
    return 0


def cmd_ablate(args) -> int:
    from .experiments import DESK_CONFIG, ablate, compare_variants

    seeds = list(range(1, args.seeds + 1))
    comp = compare_variants(seeds, DESK_CONFIG) if args.variants else ablate(seeds, DESK_CONFIG)
    lines = [comp.table()]
    for (hi, lo), (t, p) in comp.tests.items():
        lines.append(f"{hi} > {lo}: t={t:.3f} p={p:.4g}\n")
    _emit("".join(lines), args.output)
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softlex", description="Lexicon-augmented BiLSTM-CRF Chinese NER")
    parser.add_argument("--backend", choices=_kernels.available_backends(), help="kernel implementation")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="fit a model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test")
    p.add_argument("--lexicon", required=True)
    for key in ("char", "bigram", "word"):
        p.add_argument(f"--embeddings-{key}", metavar="PATH")
    p.add_argument("--config", help="TrainConfig as JSON")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", help="per-epoch JSON-lines log")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--patience", type=int)
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="entity-level P/R/F1 as JSON")
    p.add_argument("--test", required=True, help="gold CoNLL file")
    p.add_argument("--checkpoint")
    p.add_argument("--pred", help="predicted CoNLL file (scored against --test without a model)")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--float32", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="tag plain sentences, one per line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--float32", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="throughput against sentence length")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", help="plain sentences, one per line")
    p.add_argument("--test", help="CoNLL file whose sentences are timed")
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--buckets", help='e.g. "1-20,21-40,41-"')
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--passes", type=int, default=3)
    p.add_argument("--float32", action="store_true")
    p.add_argument("--json", help="write the report here instead of stdout")
    p.add_argument("--tsv", help="plot data: bucket midpoint and sentences/sec")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("freq", help="count lexicon word frequencies on train (+dev)")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_freq)

    p = sub.add_parser("features", help="dump per-character word sets and ExSoftword flags")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("synth", help="write a synthetic corpus, lexicon and word vectors")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablate", help="ablation table (or --variants comparison) on synthetic data")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--variants", action="store_true", help="compare char-only, ExSoftword and SoftLexicon")
    p.add_argument("--output")
    p.set_defaults(func=cmd_ablate)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    name = os.environ.get("SOFTLEX_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        print(f"softlex: warning: unknown SOFTLEX_LOG level {name!r}, using WARNING", file=sys.stderr)
        level = logging.WARNING
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(level)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"softlex: error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (SoftlexError, ValueError, OSError) as exc:
        print(f"softlex: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
