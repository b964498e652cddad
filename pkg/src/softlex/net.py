"""Numeric core: BiLSTM encoder, linear-chain CRF, and hand-written gradients.

Shapes follow the time-major convention ``(T, B, ...)`` for batched code.
LSTM weights stack the gate blocks in the order (input, forget, output,
candidate) along the first axis: ``W`` is ``(4h, d_in + h)`` acting on
``[x_t; h_{t-1}]``.

CRF transition matrices are ``(Y + 2, Y + 2)``; index ``Y`` is START and
``Y + 1`` is STOP. Column START and row STOP hold ``-inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConfigurationError, PreconditionError, TapeError

PARAM_ORDER = (
    "char_emb",
    "bigram_emb",
    "word_emb",
    "fwd_W",
    "fwd_b",
    "bwd_W",
    "bwd_b",
    "emit_W",
    "emit_b",
    "trans",
)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------- LSTM


@dataclass
class LstmParams:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.W.shape[0] % 4:
            raise ConfigurationError(f"LSTM weight must be (4h, d_in + h), got {self.W.shape}")
        if self.b.shape != (self.W.shape[0],):
            raise ConfigurationError(f"LSTM bias must be ({self.W.shape[0]},), got {self.b.shape}")
        if self.input_dim <= 0:
            raise ConfigurationError("LSTM weight has no input columns")

    @property
    def hidden(self) -> int:
        return self.W.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.hidden

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng: np.random.Generator, dtype=np.float64) -> "LstmParams":
        scale = 1.0 / np.sqrt(hidden)
        W = rng.uniform(-scale, scale, size=(4 * hidden, input_dim + hidden)).astype(dtype)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = 1.0  # forget-gate bias
        return cls(W, b)


def lstm_step(p: LstmParams, x_t, h_prev, c_prev):
    """One LSTM transition; inputs may be vectors or ``(B, ·)`` row batches."""
    h = p.hidden
    x_t = np.asarray(x_t)
    if x_t.shape[-1] != p.input_dim or np.shape(h_prev)[-1] != h or np.shape(c_prev)[-1] != h:
        raise ConfigurationError("lstm_step: input or state dimensions do not match the weights")
    z = np.concatenate([x_t, h_prev], axis=-1) @ p.W.T + p.b
    i = sigmoid(z[..., :h])
    f = sigmoid(z[..., h:2 * h])
    o = sigmoid(z[..., 2 * h:3 * h])
    g = np.tanh(z[..., 3 * h:])
    c = g * i + c_prev * f
    return o * np.tanh(c), c


def _mm(X, M):
    """``X @ M`` for a ``(T, B, k)`` stack, as a single 2-D GEMM."""
    T, B, k = X.shape
    return (X.reshape(T * B, k) @ M).reshape(T, B, M.shape[1])


def _lstm_forward(W, b, X, record, backend=None):
    d = X.shape[2]
    Zx = _mm(X, W[:, :d].T)
    Zx += b
    Zx = np.ascontiguousarray(Zx, dtype=W.dtype)
    kernel = _kernels.get_backend(backend).lstm_recurrence
    H, A, C, TC = kernel(Zx, np.ascontiguousarray(W), d, record)
    cache = (X, A, C, TC, H) if record else None
    return H, cache


def _lstm_backward(W, dH, cache):
    X, A, C, TC, H = cache
    T, B, d = X.shape
    h = W.shape[0] // 4
    Wx, Wh = W[:, :d], W[:, d:]
    dZ = np.empty((T, B, 4 * h), dtype=X.dtype)
    dh_next = np.zeros((B, h), dtype=X.dtype)
    dc_next = np.zeros((B, h), dtype=X.dtype)
    zeros = np.zeros((B, h), dtype=X.dtype)
    for t in range(T - 1, -1, -1):
        a = A[t]
        i, f, o, g = a[:, :h], a[:, h:2 * h], a[:, 2 * h:3 * h], a[:, 3 * h:]
        tc = TC[t]
        c_prev = C[t - 1] if t > 0 else zeros
        dh = dH[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dZ[t]
        dz[:, :h] = dc * g * i * (1.0 - i)
        dz[:, h:2 * h] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * h:3 * h] = dh * tc * o * (1.0 - o)
        dz[:, 3 * h:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dz @ Wh
    flat = dZ.reshape(T * B, 4 * h)
    H_prev = np.concatenate([np.zeros((1, B, h), dtype=X.dtype), H[:-1]], axis=0)
    dW = np.concatenate([flat.T @ X.reshape(T * B, d), flat.T @ H_prev.reshape(T * B, h)], axis=1)
    db = flat.sum(axis=0)
    dX = _mm(dZ, Wx)
    return dX, dW, db


def bilstm_encode(fwd: LstmParams, bwd: LstmParams, xs, backend: str | None = None) -> np.ndarray:
    """Concatenated forward/backward hidden states, shape ``(n, 2h)``."""
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise PreconditionError("bilstm_encode needs a non-empty (n, d) sequence")
    if X.shape[1] != fwd.input_dim or X.shape[1] != bwd.input_dim:
        raise ConfigurationError("bilstm_encode: input dim does not match the weights")
    Hf, _ = _lstm_forward(fwd.W, fwd.b, X[:, None, :], False, backend)
    Hb, _ = _lstm_forward(bwd.W, bwd.b, X[::-1, None, :], False, backend)
    return np.concatenate([Hf[:, 0], Hb[::-1, 0]], axis=1)


# ---------------------------------------------------------------------- CRF


def init_transitions(num_labels: int, rng: np.random.Generator | None = None, dtype=np.float64) -> np.ndarray:
    size = num_labels + 2
    trans = np.zeros((size, size), dtype=dtype)
    if rng is not None:
        trans[:] = rng.uniform(-0.1, 0.1, size=(size, size))
    trans[:, num_labels] = -np.inf
    trans[num_labels + 1, :] = -np.inf
    return trans


def _check_crf(emissions, trans):
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise PreconditionError("emissions must be a non-empty (n, Y) array")
    if not np.all(np.isfinite(emissions)):
        raise PreconditionError("emissions contain non-finite values")
    y = emissions.shape[1]
    if trans.shape != (y + 2, y + 2):
        raise ConfigurationError(f"transition matrix must be {(y + 2, y + 2)}, got {trans.shape}")
    return emissions, np.asarray(trans, dtype=np.float64)


def crf_log_partition(emissions, trans, backend: str | None = None) -> float:
    """Log of the sum of exp-scores over every label sequence (forward algorithm)."""
    emissions, trans = _check_crf(emissions, trans)
    return float(_kernels.get_backend(backend).log_partition(emissions, trans))


def path_score(emissions, trans, labels: Sequence[int]) -> float:
    """Unnormalized log-score of one label sequence, summed left to right."""
    emissions, trans = _check_crf(emissions, trans)
    y = emissions.shape[1]
    labels = [int(v) for v in labels]
    if len(labels) != emissions.shape[0]:
        raise PreconditionError("label sequence length differs from the emissions")
    if any(not 0 <= v < y for v in labels):
        raise PreconditionError(f"label ids must lie in [0, {y})")
    s = trans[y, labels[0]] + emissions[0, labels[0]]
    for t in range(1, len(labels)):
        s = s + trans[labels[t - 1], labels[t]] + emissions[t, labels[t]]
    return float(s + trans[labels[-1], y + 1])


def crf_nll(emissions, trans, gold: Sequence[int], backend: str | None = None) -> float:
    """Negative log-likelihood of ``gold``."""
    return crf_log_partition(emissions, trans, backend) - path_score(emissions, trans, gold)


def viterbi_decode(emissions, trans, backend: str | None = None) -> tuple[np.ndarray, float]:
    """Best label sequence and its score; ties go to the lowest label id."""
    emissions, trans = _check_crf(emissions, trans)
    path, score = _kernels.get_backend(backend).viterbi(emissions, trans)
    return path, float(score)


def viterbi(emissions, trans, backend: str | None = None) -> np.ndarray:
    return viterbi_decode(emissions, trans, backend)[0]


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


# ----------------------------------------------------------- batched model


@dataclass
class Batch:
    """Padded, time-major batch of prepared sentences.

    ``lex_index`` addresses rows of the flattened ``(T * B * slots, d_w)``
    pooled-feature buffer; ``lex_row`` and ``lex_coef`` give the word-table
    row and weight of each pooled contribution.
    """

    char_ids: np.ndarray
    lengths: np.ndarray
    bigram_ids: np.ndarray | None = None
    exsoft: np.ndarray | None = None
    lex_index: np.ndarray | None = None
    lex_row: np.ndarray | None = None
    lex_coef: np.ndarray | None = None
    num_slots: int = 0
    gold: np.ndarray | None = None
    mask: np.ndarray = field(init=False)

    def __post_init__(self):
        T, B = self.char_ids.shape
        self.mask = np.arange(T)[:, None] < self.lengths[None, :]

    @property
    def shape(self) -> tuple[int, int]:
        return self.char_ids.shape


@dataclass
class Tape:
    """Intermediates of one recorded forward pass."""

    params: dict[str, np.ndarray]
    batch: Batch
    cache: dict
    loss: float
    consumed: bool = False


def _reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    t = np.arange(T)[:, None]
    return np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)


def _dropout(x, rate, rng):
    if rate <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def _inputs(params, batch: Batch):
    T, B = batch.shape
    parts = [params["char_emb"][batch.char_ids]]
    if "bigram_emb" in params:
        parts.append(params["bigram_emb"][batch.bigram_ids])
    if "word_emb" in params:
        word = params["word_emb"]
        feats = np.zeros((T * B * batch.num_slots, word.shape[1]), dtype=word.dtype)
        np.add.at(feats, batch.lex_index, batch.lex_coef[:, None] * word[batch.lex_row])
        parts.append(feats.reshape(T, B, -1))
    if batch.exsoft is not None:
        parts.append(batch.exsoft.astype(parts[0].dtype))
    return np.concatenate(parts, axis=2) if len(parts) > 1 else parts[0]


def emissions(
    params: dict[str, np.ndarray],
    batch: Batch,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    record: bool = False,
    backend: str | None = None,
):
    """Per-label scores ``(T, B, Y)``; with ``record`` also the backward cache."""
    T, B = batch.shape
    X = _inputs(params, batch)
    X_in, keep_x = _dropout(X, dropout, rng)
    rev = _reverse_index(batch.lengths, T)
    cols = np.arange(B)[None, :]
    Hf, cache_f = _lstm_forward(params["fwd_W"], params["fwd_b"], X_in, record, backend)
    Hr, cache_b = _lstm_forward(params["bwd_W"], params["bwd_b"], X_in[rev, cols], record, backend)
    H = np.concatenate([Hf, Hr[rev, cols]], axis=2)
    H_in, keep_h = _dropout(H, dropout, rng)
    E = _mm(H_in, params["emit_W"].T) + params["emit_b"]
    if not record:
        return E, None
    cache = dict(X=X, keep_x=keep_x, rev=rev, cache_f=cache_f, cache_b=cache_b, H_in=H_in, keep_h=keep_h, E=E)
    return E, cache


def _crf_batch(E, trans, batch: Batch):
    T, B, Y = E.shape
    start, stop = Y, Y + 1
    inner = trans[:Y, :Y]
    mask = batch.mask
    alpha = np.empty((T, B, Y), dtype=E.dtype)
    alpha[0] = trans[start, :Y] + E[0]
    for t in range(1, T):
        nxt = _logsumexp(alpha[t - 1][:, :, None] + inner[None], axis=1) + E[t]
        alpha[t] = np.where(mask[t][:, None], nxt, alpha[t - 1])
    log_z = _logsumexp(alpha[T - 1] + trans[:Y, stop], axis=1)

    gold = batch.gold
    cols = np.arange(B)
    em = np.take_along_axis(E, gold[..., None], axis=2)[..., 0]
    score = (em * mask).sum(axis=0) + trans[start, gold[0]]
    if T > 1:
        score += (inner[gold[:-1], gold[1:]] * mask[1:]).sum(axis=0)
    last = gold[batch.lengths - 1, cols]
    score += trans[last, stop]
    return log_z, score, alpha


def _crf_batch_grad(E, trans, batch: Batch, alpha, log_z, weight):
    T, B, Y = E.shape
    start, stop = Y, Y + 1
    inner = trans[:Y, :Y]
    mask = batch.mask
    lengths = batch.lengths
    beta = np.empty((T, B, Y), dtype=E.dtype)
    beta[T - 1] = trans[:Y, stop]
    for t in range(T - 2, -1, -1):
        rec = _logsumexp(inner[None] + (E[t + 1] + beta[t + 1])[:, None, :], axis=2)
        beta[t] = np.where((t + 1 < lengths)[:, None], rec, trans[:Y, stop])
    marg = np.exp(alpha + beta - log_z[None, :, None]) * mask[..., None]

    gold = batch.gold
    onehot = np.zeros_like(E)
    np.put_along_axis(onehot, gold[..., None], 1.0, axis=2)
    onehot *= mask[..., None]
    dE = (marg - onehot) * weight

    dtrans = np.zeros_like(trans)
    if T > 1:
        pair = np.exp(
            alpha[:-1, :, :, None] + inner[None, None] + (E[1:] + beta[1:])[:, :, None, :]
            - log_z[None, :, None, None]
        ) * mask[1:, :, None, None]
        counts = np.zeros((Y, Y), dtype=E.dtype)
        m1 = mask[1:]
        np.add.at(counts, (gold[:-1][m1], gold[1:][m1]), 1.0)
        dtrans[:Y, :Y] = (pair.sum(axis=(0, 1)) - counts) * weight
    cols = np.arange(B)
    first_gold = np.bincount(gold[0], minlength=Y)
    dtrans[start, :Y] = (marg[0].sum(axis=0) - first_gold) * weight
    last = gold[lengths - 1, cols]
    dtrans[:Y, stop] = (marg[lengths - 1, cols].sum(axis=0) - np.bincount(last, minlength=Y)) * weight
    return dE, dtrans


def forward(
    params: dict[str, np.ndarray],
    batch: Batch,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[float, Tape]:
    """Mean negative log-likelihood over the batch, recorded on a :class:`Tape`."""
    if batch.gold is None:
        raise PreconditionError("forward needs gold labels")
    if dropout > 0.0 and rng is None:
        raise ConfigurationError("dropout needs a random generator")
    E, cache = emissions(params, batch, dropout, rng, record=True)
    log_z, score, alpha = _crf_batch(E, params["trans"], batch)
    cache.update(log_z=log_z, alpha=alpha)
    loss = float(np.mean(log_z - score))
    return loss, Tape(params, batch, cache, loss)


def backward(tape: Tape, scale: float = 1.0) -> dict[str, np.ndarray]:
    """Gradients of ``scale * loss`` for every parameter of the recorded pass."""
    if tape.consumed:
        raise TapeError("tape already consumed; run forward again before backward")
    tape.consumed = True
    params, batch, c = tape.params, tape.batch, tape.cache
    T, B = batch.shape
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    dE, dtrans = _crf_batch_grad(c["E"], params["trans"], batch, c["alpha"], c["log_z"], scale / B)
    grads["trans"] = dtrans
    H_in = c["H_in"]
    grads["emit_W"] = dE.reshape(T * B, -1).T @ H_in.reshape(T * B, -1)
    grads["emit_b"] = dE.sum(axis=(0, 1))
    dH = _mm(dE, params["emit_W"])
    if c["keep_h"] is not None:
        dH = dH * c["keep_h"]
    h = params["fwd_W"].shape[0] // 4
    rev = c["rev"]
    cols = np.arange(B)[None, :]
    dXf, grads["fwd_W"], grads["fwd_b"] = _lstm_backward(params["fwd_W"], dH[:, :, :h], c["cache_f"])
    dXr, grads["bwd_W"], grads["bwd_b"] = _lstm_backward(params["bwd_W"], dH[:, :, h:][rev, cols], c["cache_b"])
    dX = dXf + dXr[rev, cols]
    if c["keep_x"] is not None:
        dX = dX * c["keep_x"]
    dX = dX * batch.mask[..., None]

    offset = 0
    char = params["char_emb"]
    d = char.shape[1]
    np.add.at(grads["char_emb"], batch.char_ids[batch.mask], dX[..., offset:offset + d][batch.mask])
    offset += d
    if "bigram_emb" in params:
        d = params["bigram_emb"].shape[1]
        np.add.at(grads["bigram_emb"], batch.bigram_ids[batch.mask], dX[..., offset:offset + d][batch.mask])
        offset += d
    if "word_emb" in params:
        dw = params["word_emb"].shape[1]
        d = dw * batch.num_slots
        dfeat = dX[..., offset:offset + d].reshape(T * B * batch.num_slots, dw)
        np.add.at(grads["word_emb"], batch.lex_row, batch.lex_coef[:, None] * dfeat[batch.lex_index])
        offset += d
    return grads


def decode(params: dict[str, np.ndarray], batch: Batch, backend: str | None = None) -> list[np.ndarray]:
    """Viterbi label sequences for every sentence of ``batch``."""
    E, _ = emissions(params, batch, backend=backend)
    trans = params["trans"].astype(np.float64, copy=False)
    kernel = _kernels.get_backend(backend).viterbi
    out = []
    for b, n in enumerate(batch.lengths):
        path, _ = kernel(np.ascontiguousarray(E[:n, b], dtype=np.float64), trans)
        out.append(path)
    return out
