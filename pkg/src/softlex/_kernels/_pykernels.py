"""Pure Python / numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature. Matches and Viterbi paths agree exactly; floating-point results
agree to rounding error.
"""

from __future__ import annotations

import numpy as np


def match_spans(trie, text: str) -> list[tuple[int, int, int]]:
    """All ``(start, end, word_id)`` lexicon hits in ``text``, 1-based inclusive.

    Output is ordered by start, then end.
    """
    children = trie.children
    word_at = trie.word_at
    max_len = trie.max_len
    n = len(text)
    out = []
    for i in range(n):
        node = 0
        stop = min(n, i + max_len)
        for j in range(i, stop):
            node = children[node].get(text[j])
            if node is None:
                break
            wid = word_at[node]
            if wid >= 0:
                out.append((i + 1, j + 1, wid))
    return out


def viterbi(emissions: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, float]:
    n, num_labels = emissions.shape
    start, stop = num_labels, num_labels + 1
    inner = trans[:num_labels, :num_labels]
    score = trans[start, :num_labels] + emissions[0]
    back = np.zeros((n, num_labels), dtype=np.int64)
    for t in range(1, n):
        cand = score[:, None] + inner
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(num_labels)] + emissions[t]
    final = score + trans[:num_labels, stop]
    best = int(np.argmax(final))
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = best
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(final[best])


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def log_partition(emissions: np.ndarray, trans: np.ndarray) -> float:
    n, num_labels = emissions.shape
    start, stop = num_labels, num_labels + 1
    inner = trans[:num_labels, :num_labels]
    alpha = trans[start, :num_labels] + emissions[0]
    for t in range(1, n):
        alpha = _logsumexp(alpha[:, None] + inner, axis=0) + emissions[t]
    return float(_logsumexp(alpha + trans[:num_labels, stop], axis=0))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_recurrence(Zx: np.ndarray, W: np.ndarray, d_in: int, record: bool = False):
    """Run the LSTM recurrence over precomputed input projections.

    ``Zx`` is ``(T, B, 4h)`` holding ``W_x x_t + b``; ``W`` is the full
    ``(4h, d_in + h)`` weight whose trailing ``h`` columns act on the state.
    Returns ``(H, A, C, TC)``: hidden states, activated gates, cell states and
    ``tanh`` of the cell states (the last three only when ``record``).
    """
    T, B, four_h = Zx.shape
    h = four_h // 4
    WhT = W[:, d_in:].T
    H = np.empty((T, B, h), dtype=Zx.dtype)
    A = np.empty((T, B, four_h), dtype=Zx.dtype) if record else None
    C = np.empty((T, B, h), dtype=Zx.dtype) if record else None
    TC = np.empty((T, B, h), dtype=Zx.dtype) if record else None
    hp = np.zeros((B, h), dtype=Zx.dtype)
    cp = np.zeros((B, h), dtype=Zx.dtype)
    for t in range(T):
        z = Zx[t] + hp @ WhT
        a = np.empty_like(z)
        a[:, :3 * h] = _sigmoid(z[:, :3 * h])
        a[:, 3 * h:] = np.tanh(z[:, 3 * h:])
        cp = a[:, 3 * h:] * a[:, :h] + cp * a[:, h:2 * h]
        tc = np.tanh(cp)
        hp = a[:, 2 * h:3 * h] * tc
        H[t] = hp
        if record:
            A[t], C[t], TC[t] = a, cp, tc
    return H, A, C, TC
