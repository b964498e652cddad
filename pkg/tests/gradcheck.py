"""Finite-difference gradient check of the full tagger."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from softlex import net
from softlex.config import TrainConfig
from softlex.lexicon import build_lexicon, count_frequencies
from softlex.model import Tagger

SENTENCE = "张三在中山西路"
WORDS = ["张三", "中山", "山西", "中山西", "山西路", "中山西路", "在"]

# relative error uses max(|a|, |n|, FLOOR) as denominator so that coordinates
# whose true gradient is ~0 are judged on absolute error
FLOOR = 1e-6


@dataclass
class GradCheck:
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]]
    checked: int


def tiny_model(seed: int = 0, **encoder) -> tuple[Tagger, net.Batch]:
    """d_c = d_w = 8, h = 8, five labels, one sentence of length 7."""
    labels = ["O", "B-PER", "E-PER", "B-LOC", "E-LOC"]
    tags = ["B-PER", "E-PER", "O", "B-LOC", "E-LOC", "O", "O"]
    lex = build_lexicon(WORDS)
    freq = count_frequencies(lex, [SENTENCE, "山西路"])
    cfg = TrainConfig(char_dim=8, bigram_dim=8, word_dim=8, hidden_size=8, dropout=0.0, seed=seed)
    cfg = cfg.with_encoder(**{"use_bigram": True, **encoder})
    model = Tagger.build(cfg, [SENTENCE], labels, lex, freq)
    rng = np.random.default_rng(seed + 100)
    # randomize everything so no gradient is structurally tiny
    for k, v in model.params.items():
        finite = np.isfinite(v)
        v[finite] = rng.normal(scale=0.5, size=finite.sum())
    batch = model.make_batch([model.prepare(SENTENCE, tags)])
    return model, batch


def check(model: Tagger, batch: net.Batch, coords: int = 200, step: float = 1e-4, seed: int = 0) -> GradCheck:
    params = model.params
    loss, tape = net.forward(params, batch)
    grads = net.backward(tape)
    pool = [
        (name, idx)
        for name in sorted(params)
        for idx in np.ndindex(params[name].shape)
        if np.isfinite(params[name][idx])
    ]
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=min(coords, len(pool)), replace=False)
    worst, where = 0.0, ("", ())
    for p in picks:
        name, idx = pool[p]
        arr = params[name]
        orig = arr[idx]
        arr[idx] = orig + step
        up, _ = net.forward(params, batch)
        arr[idx] = orig - step
        down, _ = net.forward(params, batch)
        arr[idx] = orig
        numeric = (up - down) / (2 * step)
        analytic = grads[name][idx]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), FLOOR)
        if err > worst:
            worst, where = err, (name, idx)
    return GradCheck(worst, where, len(picks))
