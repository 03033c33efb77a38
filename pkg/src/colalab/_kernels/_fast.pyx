# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the linear-softmax policy family.

Mirrors the call surface of `_ref`; selected automatically at import when the
extension is built.
"""
import numpy as np

from libc.math cimport exp, log

BACKEND = "cython"


cdef void _softmax_row(double[:, ::1] theta, double[::1] feat, double[::1] out) noexcept:
    cdef Py_ssize_t a, f
    cdef Py_ssize_t n_actions = theta.shape[0]
    cdef Py_ssize_t n_features = theta.shape[1]
    cdef double m = -1e308
    cdef double s = 0.0
    cdef double acc
    for a in range(n_actions):
        acc = 0.0
        for f in range(n_features):
            acc += theta[a, f] * feat[f]
        out[a] = acc
        if acc > m:
            m = acc
    for a in range(n_actions):
        out[a] = exp(out[a] - m)
        s += out[a]
    for a in range(n_actions):
        out[a] /= s


def probs(double[:, ::1] theta2d, double[::1] feat):
    out = np.empty(theta2d.shape[0])
    cdef double[::1] view = out
    _softmax_row(theta2d, feat, view)
    return out


def probs_batch(double[:, ::1] theta2d, double[:, ::1] feats):
    cdef Py_ssize_t n = feats.shape[0]
    out = np.empty((n, theta2d.shape[0]))
    cdef double[:, ::1] view = out
    cdef Py_ssize_t i
    for i in range(n):
        _softmax_row(theta2d, feats[i], view[i])
    return out


def sample_action(double[:, ::1] theta2d, double[::1] feat, double u):
    cdef Py_ssize_t n_actions = theta2d.shape[0]
    buf = np.empty(n_actions)
    cdef double[::1] p = buf
    _softmax_row(theta2d, feat, p)
    cdef double target = u  # probabilities sum to 1 by construction
    cdef double acc = 0.0
    cdef Py_ssize_t a
    for a in range(n_actions):
        acc += p[a]
        if target < acc:
            return a
    return n_actions - 1


def segment_gradient(double[:, ::1] theta2d, double[:, ::1] feats,
                     Py_ssize_t[::1] actions, double[::1] weights):
    cdef Py_ssize_t n = feats.shape[0]
    cdef Py_ssize_t n_actions = theta2d.shape[0]
    cdef Py_ssize_t n_features = theta2d.shape[1]
    out = np.zeros((n_actions, n_features))
    buf = np.empty(n_actions)
    cdef double[:, ::1] g = out
    cdef double[::1] p = buf
    cdef Py_ssize_t k, a, f
    cdef double coef, w
    for k in range(n):
        _softmax_row(theta2d, feats[k], p)
        w = weights[k]
        for a in range(n_actions):
            coef = -p[a] * w
            if a == actions[k]:
                coef += w
            if coef != 0.0:
                for f in range(n_features):
                    g[a, f] += coef * feats[k, f]
    return out.reshape(-1)


def fvp_batch(double[:, ::1] theta2d, double[:, ::1] feats, double[::1] v, double damping):
    cdef Py_ssize_t n = feats.shape[0]
    cdef Py_ssize_t n_actions = theta2d.shape[0]
    cdef Py_ssize_t n_features = theta2d.shape[1]
    out = np.zeros((n_actions, n_features))
    pbuf = np.empty(n_actions)
    ubuf = np.empty(n_actions)
    cdef double[:, ::1] res = out
    cdef double[::1] p = pbuf
    cdef double[::1] u = ubuf
    cdef double[:, ::1] vmat = np.asarray(v).reshape(n_actions, n_features)
    cdef Py_ssize_t i, a, f
    cdef double s, w
    for i in range(n):
        _softmax_row(theta2d, feats[i], p)
        s = 0.0
        for a in range(n_actions):
            w = 0.0
            for f in range(n_features):
                w += vmat[a, f] * feats[i, f]
            u[a] = p[a] * w
            s += u[a]
        for a in range(n_actions):
            w = u[a] - p[a] * s
            if w != 0.0:
                for f in range(n_features):
                    res[a, f] += w * feats[i, f]
    flat = out.reshape(-1)
    flat /= n
    flat += damping * np.asarray(v)
    return flat


cdef double _logsumexp_row(double[:, ::1] theta, double[::1] feat, double[::1] logits) noexcept:
    cdef Py_ssize_t a, f
    cdef Py_ssize_t n_actions = theta.shape[0]
    cdef Py_ssize_t n_features = theta.shape[1]
    cdef double m = -1e308
    cdef double s = 0.0
    cdef double acc
    for a in range(n_actions):
        acc = 0.0
        for f in range(n_features):
            acc += theta[a, f] * feat[f]
        logits[a] = acc
        if acc > m:
            m = acc
    for a in range(n_actions):
        s += exp(logits[a] - m)
    return m + log(s)


def kl_mean(double[:, ::1] theta_p, double[:, ::1] theta_q, double[:, ::1] feats):
    cdef Py_ssize_t n = feats.shape[0]
    cdef Py_ssize_t n_actions = theta_p.shape[0]
    lpbuf = np.empty(n_actions)
    lqbuf = np.empty(n_actions)
    cdef double[::1] lp = lpbuf
    cdef double[::1] lq = lqbuf
    cdef double total = 0.0
    cdef double zp, zq, dp
    cdef Py_ssize_t i, a
    for i in range(n):
        zp = _logsumexp_row(theta_p, feats[i], lp)
        zq = _logsumexp_row(theta_q, feats[i], lq)
        for a in range(n_actions):
            dp = lp[a] - zp
            total += exp(dp) * (dp - (lq[a] - zq))
    return total / n


def surrogate_sum(double[:, ::1] theta_p, double[:, ::1] theta_q, double[:, ::1] feats,
                  Py_ssize_t[::1] actions, double[::1] weights):
    cdef Py_ssize_t n = feats.shape[0]
    cdef Py_ssize_t n_actions = theta_p.shape[0]
    lpbuf = np.empty(n_actions)
    lqbuf = np.empty(n_actions)
    cdef double[::1] lp = lpbuf
    cdef double[::1] lq = lqbuf
    cdef double total = 0.0
    cdef double zp, zq
    cdef Py_ssize_t i, a
    for i in range(n):
        zp = _logsumexp_row(theta_p, feats[i], lp)
        zq = _logsumexp_row(theta_q, feats[i], lq)
        a = actions[i]
        total += weights[i] * exp((lq[a] - zq) - (lp[a] - zp))
    return total
