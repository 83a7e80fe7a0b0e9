# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled element-matrix kernels (hot inner loops of Galerkin assembly)."""

import numpy as np

cimport numpy as cnp

BACKEND = "compiled"


def sym_triple_products(double[:, :, :, ::1] A, double[:, :, :, ::1] W, double[:, ::1] s):
    """See ``fallback.sym_triple_products``; identical contract."""
    cdef Py_ssize_t E = A.shape[0]
    cdef Py_ssize_t Q = A.shape[1]
    cdef Py_ssize_t NL = A.shape[2]
    out_np = np.zeros((E, NL, NL))
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t e, q, l, m
    cdef double w00, w01, w02, w11, w12, w22, sq
    cdef double a0, a1, a2, t0, t1, t2, acc

    for e in range(E):
        for q in range(Q):
            sq = s[e, q]
            w00 = W[e, q, 0, 0] * sq
            w01 = W[e, q, 0, 1] * sq
            w02 = W[e, q, 0, 2] * sq
            w11 = W[e, q, 1, 1] * sq
            w12 = W[e, q, 1, 2] * sq
            w22 = W[e, q, 2, 2] * sq
            for l in range(NL):
                a0 = A[e, q, l, 0]
                a1 = A[e, q, l, 1]
                a2 = A[e, q, l, 2]
                t0 = w00 * a0 + w01 * a1 + w02 * a2
                t1 = w01 * a0 + w11 * a1 + w12 * a2
                t2 = w02 * a0 + w12 * a1 + w22 * a2
                for m in range(l, NL):
                    acc = t0 * A[e, q, m, 0] + t1 * A[e, q, m, 1] + t2 * A[e, q, m, 2]
                    out[e, l, m] += acc
    # mirror the strict upper triangle
    for e in range(E):
        for l in range(NL):
            for m in range(l + 1, NL):
                out[e, m, l] = out[e, l, m]
    return out_np


def elasticity_blocks(double[:, :, :, ::1] grads, double[:, ::1] s, double eta, double lam):
    """See ``fallback.elasticity_blocks``; identical contract."""
    cdef Py_ssize_t E = grads.shape[0]
    cdef Py_ssize_t Q = grads.shape[1]
    cdef Py_ssize_t NL = grads.shape[2]
    out_np = np.zeros((E, 3 * NL, 3 * NL))
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t e, q, l, m, a, b
    cdef double sq, dot
    cdef double gl0, gl1, gl2, gm0, gm1, gm2
    cdef double gl[3]
    cdef double gm[3]

    for e in range(E):
        for q in range(Q):
            sq = s[e, q]
            for l in range(NL):
                gl[0] = grads[e, q, l, 0]
                gl[1] = grads[e, q, l, 1]
                gl[2] = grads[e, q, l, 2]
                for m in range(NL):
                    gm[0] = grads[e, q, m, 0]
                    gm[1] = grads[e, q, m, 1]
                    gm[2] = grads[e, q, m, 2]
                    dot = (gl[0] * gm[0] + gl[1] * gm[1] + gl[2] * gm[2]) * sq
                    for a in range(3):
                        out[e, 3 * l + a, 3 * m + a] += eta * dot
                        for b in range(3):
                            out[e, 3 * l + a, 3 * m + b] += sq * (
                                eta * gl[b] * gm[a] + lam * gl[a] * gm[b])
    return out_np
