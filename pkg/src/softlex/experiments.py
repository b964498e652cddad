"""Variant comparison over seeds and the SoftLexicon ablation harness."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .config import TrainConfig
from .lexicon import build_lexicon
from .synth import generate
from .train import evaluate, fit

log = logging.getLogger(__name__)

# Small enough for a laptop CPU; still separates the variants on the synthetic corpus.
DESK_CONFIG = TrainConfig(hidden_size=50, epochs=6, lr=0.01, dropout=0.3, patience=5)

VARIANTS = {
    "char-only": {"feature": "none"},
    "+ExSoftword": {"feature": "exsoftword"},
    "+SoftLexicon": {"feature": "softlexicon"},
}

ABLATIONS = {
    "full": {},
    "- M group": {"drop_m_group": True},
    "- Distinction": {"merge_groups": True},
    "- Weighted pooling": {"pooling_mode": "mean"},
    "- Overall weighting": {"normalization": "per_group"},
}


@dataclass
class Comparison:
    """Test F1 per variant (one entry per seed) and paired tests against a baseline."""

    scores: dict[str, list[float]]
    seeds: list[int]
    tests: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)

    def mean(self, name: str) -> float:
        return float(np.mean(self.scores[name]))

    def table(self) -> str:
        names = list(self.scores)
        base = names[0]
        lines = ["variant\tmean_f1\tstd_f1\tdelta\t" + "\t".join(f"seed{s}" for s in self.seeds)]
        for n in names:
            f = np.asarray(self.scores[n])
            row = [n, f"{f.mean():.4f}", f"{f.std(ddof=1) if len(f) > 1 else 0.0:.4f}"]
            row.append(f"{f.mean() - self.mean(base):+.4f}")
            row += [f"{x:.4f}" for x in f]
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"


def paired_test(better: list[float], worse: list[float]) -> tuple[float, float]:
    """One-sided paired t-test that ``better`` exceeds ``worse``: (t, p)."""
    a, b = np.asarray(better), np.asarray(worse)
    if np.allclose(a - b, (a - b)[0]):
        # zero variance in the differences; the t statistic is undefined
        d = float((a - b)[0])
        return (np.inf if d > 0 else -np.inf if d < 0 else 0.0), (0.0 if d > 0 else 1.0)
    res = stats.ttest_rel(a, b, alternative="greater")
    return float(res.statistic), float(res.pvalue)


def run_variants(
    variants: dict[str, dict],
    seeds: list[int],
    cfg: TrainConfig = DESK_CONFIG,
    corpus_kwargs: dict | None = None,
) -> Comparison:
    """Train and test every encoder variant on one synthetic corpus per seed.

    The seed drives both the corpus draw and the model initialization, and
    each variant sees the same corpus for a given seed so results pair up.
    """
    scores: dict[str, list[float]] = {name: [] for name in variants}
    for seed in seeds:
        corpus = generate(seed, **(corpus_kwargs or {}))
        lex = build_lexicon(corpus.lexicon_words)
        for name, changes in variants.items():
            run_cfg = replace(cfg, seed=seed).with_encoder(**changes)
            result = fit(run_cfg, corpus.train, corpus.dev, lex, embeddings={"word": corpus.word_vectors})
            f1 = evaluate(result.model, corpus.test).f1
            scores[name].append(f1)
            log.info("seed %d %s test F1 %.4f", seed, name, f1)
    return Comparison(scores, list(seeds))


def compare_variants(seeds: list[int], cfg: TrainConfig = DESK_CONFIG, corpus_kwargs: dict | None = None) -> Comparison:
    """char-only vs +ExSoftword vs +SoftLexicon, with paired one-sided tests."""
    comp = run_variants(VARIANTS, seeds, cfg, corpus_kwargs)
    s = comp.scores
    for hi, lo in (("+SoftLexicon", "char-only"), ("+SoftLexicon", "+ExSoftword"), ("+ExSoftword", "char-only")):
        comp.tests[(hi, lo)] = paired_test(s[hi], s[lo])
    return comp


def ablate(seeds: list[int], cfg: TrainConfig = DESK_CONFIG, corpus_kwargs: dict | None = None) -> Comparison:
    """Full SoftLexicon against each single-flag ablation."""
    comp = run_variants(ABLATIONS, seeds, replace(cfg, encoder=replace(cfg.encoder, feature="softlexicon")), corpus_kwargs)
    for name in list(ABLATIONS)[1:]:
        comp.tests[("full", name)] = paired_test(comp.scores["full"], comp.scores[name])
    return comp
