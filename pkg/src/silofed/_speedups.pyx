# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: minibatch softmax SGD, evaluation, pairwise distances.

Same contracts as silofed._kernels_py. Loops accumulate per-pair squared
distances left-to-right, keeping pairwise_sqdist bit-identical to the
pure backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

BACKEND = "c"


def sgd_epochs(w, feats, labels, order, lr, batch_size):
    """Run minibatch SGD on softmax cross-entropy and return updated weights."""
    cdef double[:, ::1] wv = np.array(w, dtype=np.float64, order="C")
    cdef const double[:, ::1] x = np.ascontiguousarray(feats, dtype=np.float64)
    cdef const cnp.int64_t[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const cnp.int64_t[:, ::1] orderv = np.ascontiguousarray(order, dtype=np.int64)
    cdef double dlr = lr
    cdef Py_ssize_t bsz = batch_size
    cdef Py_ssize_t n_epochs = orderv.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t dim = x.shape[1]
    cdef Py_ssize_t n_cls = wv.shape[0]

    cdef double[:, ::1] grad = np.zeros((n_cls, dim), dtype=np.float64)
    cdef double[::1] logits = np.zeros(n_cls, dtype=np.float64)
    cdef Py_ssize_t e, start, stop, b, i, c, d, cur
    cdef double m, s, z, coef, inv

    for e in range(n_epochs):
        start = 0
        while start < n:
            stop = start + bsz
            if stop > n:
                stop = n
            for c in range(n_cls):
                for d in range(dim):
                    grad[c, d] = 0.0
            for b in range(start, stop):
                i = orderv[e, b]
                m = -1e308
                for c in range(n_cls):
                    z = 0.0
                    for d in range(dim):
                        z += wv[c, d] * x[i, d]
                    logits[c] = z
                    if z > m:
                        m = z
                s = 0.0
                for c in range(n_cls):
                    logits[c] = exp(logits[c] - m)
                    s += logits[c]
                for c in range(n_cls):
                    coef = logits[c] / s
                    if c == y[i]:
                        coef -= 1.0
                    for d in range(dim):
                        grad[c, d] += coef * x[i, d]
            inv = 1.0 / (stop - start)
            for c in range(n_cls):
                for d in range(dim):
                    wv[c, d] -= dlr * (grad[c, d] * inv)
            start = stop
    return np.asarray(wv)


def softmax_grad(w, feats, labels):
    """Mean cross-entropy gradient over the full set, shape (C, D)."""
    cdef const double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(feats, dtype=np.float64)
    cdef const cnp.int64_t[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t dim = x.shape[1]
    cdef Py_ssize_t n_cls = wv.shape[0]
    cdef double[:, ::1] grad = np.zeros((n_cls, dim), dtype=np.float64)
    cdef double[::1] logits = np.zeros(n_cls, dtype=np.float64)
    cdef Py_ssize_t i, c, d
    cdef double m, s, z, coef, inv = 1.0 / n

    for i in range(n):
        m = -1e308
        for c in range(n_cls):
            z = 0.0
            for d in range(dim):
                z += wv[c, d] * x[i, d]
            logits[c] = z
            if z > m:
                m = z
        s = 0.0
        for c in range(n_cls):
            logits[c] = exp(logits[c] - m)
            s += logits[c]
        for c in range(n_cls):
            coef = logits[c] / s
            if c == y[i]:
                coef -= 1.0
            for d in range(dim):
                grad[c, d] += coef * x[i, d]
    out = np.asarray(grad)
    out *= inv
    return out


def softmax_eval(w, feats, labels):
    """Return (accuracy, mean cross-entropy loss); argmax ties to lowest index."""
    cdef const double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(feats, dtype=np.float64)
    cdef const cnp.int64_t[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t dim = x.shape[1]
    cdef Py_ssize_t n_cls = wv.shape[0]
    cdef double[::1] logits = np.zeros(n_cls, dtype=np.float64)
    cdef Py_ssize_t i, c, d, best
    cdef double m, s, z, loss = 0.0
    cdef Py_ssize_t correct = 0

    for i in range(n):
        best = 0
        for c in range(n_cls):
            z = 0.0
            for d in range(dim):
                z += wv[c, d] * x[i, d]
            logits[c] = z
            if z > logits[best]:
                best = c
        if best == y[i]:
            correct += 1
        m = logits[0]
        for c in range(1, n_cls):
            if logits[c] > m:
                m = logits[c]
        s = 0.0
        for c in range(n_cls):
            s += exp(logits[c] - m)
        loss += log(s) - (logits[y[i]] - m)
    return correct / <double>n, loss / n


def pairwise_sqdist(mats):
    """All-pairs squared L2 distances; left-to-right accumulation per pair."""
    cdef const double[:, ::1] m = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t n = m.shape[0]
    cdef Py_ssize_t dim = m.shape[1]
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, d
    cdef double s, diff

    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for d in range(dim):
                diff = m[i, d] - m[j, d]
                s += diff * diff
            out[i, j] = s
            out[j, i] = s
    return out_arr
