# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: trie span matching, Viterbi, CRF log-partition."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline Py_ssize_t _find_child(const int[:] child_start, const unsigned int[:] child_code,
                                   int node, unsigned int code) noexcept nogil:
    cdef Py_ssize_t lo = child_start[node]
    cdef Py_ssize_t hi = child_start[node + 1] - 1
    cdef Py_ssize_t mid
    cdef unsigned int c
    while lo <= hi:
        mid = (lo + hi) >> 1
        c = child_code[mid]
        if c == code:
            return mid
        if c < code:
            lo = mid + 1
        else:
            hi = mid - 1
    return -1


def match_spans(trie, str text):
    cdef const int[:] child_start = trie.child_start
    cdef const unsigned int[:] child_code = trie.child_code
    cdef const int[:] child_node = trie.child_node
    cdef const int[:] word_at = trie.word_at_array
    cdef int max_len = trie.max_len
    cdef const unsigned int[:] codes = np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t i, j, stop, k
    cdef int node, wid
    out = []
    for i in range(n):
        node = 0
        stop = min(n, i + max_len)
        for j in range(i, stop):
            k = _find_child(child_start, child_code, node, codes[j])
            if k < 0:
                break
            node = child_node[k]
            wid = word_at[node]
            if wid >= 0:
                out.append((i + 1, j + 1, wid))
    return out


def viterbi(emissions, trans):
    cdef const double[:, :] em = np.ascontiguousarray(emissions, dtype=np.float64)
    cdef const double[:, :] tr = np.ascontiguousarray(trans, dtype=np.float64)
    cdef Py_ssize_t n = em.shape[0]
    cdef Py_ssize_t L = em.shape[1]
    cdef Py_ssize_t start = L, stop = L + 1
    cdef double[:] score = np.empty(L)
    cdef double[:] nxt = np.empty(L)
    back_arr = np.zeros((n, L), dtype=np.int64)
    cdef cnp.int64_t[:, :] back = back_arr
    path_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] path = path_arr
    cdef Py_ssize_t t, y, yp, arg
    cdef double best, cand
    with nogil:
        for y in range(L):
            score[y] = tr[start, y] + em[0, y]
        for t in range(1, n):
            for y in range(L):
                arg = 0
                best = score[0] + tr[0, y]
                for yp in range(1, L):
                    cand = score[yp] + tr[yp, y]
                    if cand > best:
                        best = cand
                        arg = yp
                back[t, y] = arg
                nxt[y] = best + em[t, y]
            for y in range(L):
                score[y] = nxt[y]
        arg = 0
        best = score[0] + tr[0, stop]
        for y in range(1, L):
            cand = score[y] + tr[y, stop]
            if cand > best:
                best = cand
                arg = y
        path[n - 1] = arg
        for t in range(n - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr, best


def log_partition(emissions, trans):
    cdef const double[:, :] em = np.ascontiguousarray(emissions, dtype=np.float64)
    cdef const double[:, :] tr = np.ascontiguousarray(trans, dtype=np.float64)
    cdef Py_ssize_t n = em.shape[0]
    cdef Py_ssize_t L = em.shape[1]
    cdef Py_ssize_t start = L, stop = L + 1
    cdef double[:] alpha = np.empty(L)
    cdef double[:] nxt = np.empty(L)
    cdef double[:] buf = np.empty(L)
    cdef Py_ssize_t t, y, yp
    cdef double m, s, v
    with nogil:
        for y in range(L):
            alpha[y] = tr[start, y] + em[0, y]
        for t in range(1, n):
            for y in range(L):
                m = -INFINITY
                for yp in range(L):
                    v = alpha[yp] + tr[yp, y]
                    buf[yp] = v
                    if v > m:
                        m = v
                if m == -INFINITY:
                    nxt[y] = -INFINITY
                    continue
                s = 0.0
                for yp in range(L):
                    s += exp(buf[yp] - m)
                nxt[y] = m + log(s) + em[t, y]
            for y in range(L):
                alpha[y] = nxt[y]
        m = -INFINITY
        for y in range(L):
            v = alpha[y] + tr[y, stop]
            buf[y] = v
            if v > m:
                m = v
        if m == -INFINITY:
            s = 1.0
        else:
            s = 0.0
            for y in range(L):
                s += exp(buf[y] - m)
    return m + log(s)


from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused floating:
    float
    double


# exp-based forms: scalar libm exp is several times cheaper than tanh
cdef inline double _sig(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


cdef inline double _tanh(double x) noexcept nogil:
    return 2.0 / (1.0 + exp(-2.0 * x)) - 1.0


def lstm_recurrence(floating[:, :, ::1] Zx, floating[:, ::1] W, int d_in, bint record=False):
    """Compiled twin of the numpy LSTM recurrence (BLAS gemm per step)."""
    cdef int T = Zx.shape[0]
    cdef int B = Zx.shape[1]
    cdef int four_h = Zx.shape[2]
    cdef int h = four_h // 4
    cdef int ldw = W.shape[1]
    dtype = np.float64 if floating is double else np.float32
    z_arr = np.empty((B, four_h), dtype=dtype)
    H_arr = np.empty((T, B, h), dtype=dtype)
    hp_arr = np.zeros((B, h), dtype=dtype)
    cp_arr = np.zeros((B, h), dtype=dtype)
    cdef floating[:, ::1] z = z_arr
    cdef floating[:, :, ::1] H = H_arr
    cdef floating[:, ::1] hp = hp_arr
    cdef floating[:, ::1] cp = cp_arr
    cdef floating[:, :, ::1] A
    cdef floating[:, :, ::1] C
    cdef floating[:, :, ::1] TC
    if record:
        A_arr = np.empty((T, B, four_h), dtype=dtype)
        C_arr = np.empty((T, B, h), dtype=dtype)
        TC_arr = np.empty((T, B, h), dtype=dtype)
        A, C, TC = A_arr, C_arr, TC_arr
    else:
        A_arr = C_arr = TC_arr = None
    cdef char transa = b'T'
    cdef char transb = b'N'
    cdef floating one = 1.0
    cdef int t, b, k
    cdef double ig, fg, og, gg, c, tc
    if T == 0 or B == 0 or h == 0:
        return H_arr, A_arr, C_arr, TC_arr
    with nogil:
        for t in range(T):
            z[:, :] = Zx[t]
            if t > 0:
                # z (row-major B x 4h) += hp (B x h) @ W[:, d_in:].T
                if floating is double:
                    dgemm(&transa, &transb, &four_h, &B, &h, &one, &W[0, d_in], &ldw,
                          &hp[0, 0], &h, &one, &z[0, 0], &four_h)
                else:
                    sgemm(&transa, &transb, &four_h, &B, &h, &one, &W[0, d_in], &ldw,
                          &hp[0, 0], &h, &one, &z[0, 0], &four_h)
            for b in range(B):
                for k in range(h):
                    ig = _sig(z[b, k])
                    fg = _sig(z[b, h + k])
                    og = _sig(z[b, 2 * h + k])
                    gg = _tanh(z[b, 3 * h + k])
                    c = gg * ig + cp[b, k] * fg
                    tc = _tanh(c)
                    cp[b, k] = c
                    hp[b, k] = og * tc
                    H[t, b, k] = og * tc
                    if record:
                        A[t, b, k] = ig
                        A[t, b, h + k] = fg
                        A[t, b, 2 * h + k] = og
                        A[t, b, 3 * h + k] = gg
                        C[t, b, k] = c
                        TC[t, b, k] = tc
    return H_arr, A_arr, C_arr, TC_arr
