# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: column unfolding for 3x3x3 same-padded convolution and
2x2x2 max pooling.  Mirrors ``_fallback`` exactly in layout and semantics."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()

ctypedef fused real:
    float
    double


def vol2col(real[:, :, :, ::1] x, real[:, ::1] cols):
    """Unfold one sample (C, D, H, W) into cols (C*27, D*H*W), zero padding 1."""
    cdef Py_ssize_t C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t c, kd, kh, kw, d, h, w, row, sd, sh, base, lo, hi
    with nogil:
        for c in range(C):
            for kd in range(3):
                for kh in range(3):
                    for kw in range(3):
                        row = c * 27 + kd * 9 + kh * 3 + kw
                        lo = 1 if kw == 0 else 0
                        hi = W - 1 if kw == 2 else W
                        for d in range(D):
                            sd = d + kd - 1
                            for h in range(H):
                                sh = h + kh - 1
                                base = (d * H + h) * W
                                if sd < 0 or sd >= D or sh < 0 or sh >= H:
                                    for w in range(W):
                                        cols[row, base + w] = 0
                                    continue
                                if lo:
                                    cols[row, base] = 0
                                if hi < W:
                                    cols[row, base + W - 1] = 0
                                for w in range(lo, hi):
                                    cols[row, base + w] = x[c, sd, sh, w + kw - 1]


def col2vol(real[:, ::1] cols, real[:, :, :, ::1] out):
    """Adjoint of vol2col: scatter-add cols (C*27, D*H*W) into out (C, D, H, W)."""
    cdef Py_ssize_t C = out.shape[0], D = out.shape[1], H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t c, kd, kh, kw, d, h, w, row, sd, sh, base, lo, hi
    with nogil:
        for c in range(C):
            for kd in range(3):
                for kh in range(3):
                    for kw in range(3):
                        row = c * 27 + kd * 9 + kh * 3 + kw
                        lo = 1 if kw == 0 else 0
                        hi = W - 1 if kw == 2 else W
                        for d in range(D):
                            sd = d + kd - 1
                            if sd < 0 or sd >= D:
                                continue
                            for h in range(H):
                                sh = h + kh - 1
                                if sh < 0 or sh >= H:
                                    continue
                                base = (d * H + h) * W
                                for w in range(lo, hi):
                                    out[c, sd, sh, w + kw - 1] += cols[row, base + w]


def maxpool_forward(real[:, :, :, :, ::1] x, real[:, :, :, :, ::1] out,
                    int64_t[:, :, :, :, ::1] idx):
    """2x2x2/stride-2 pooling; idx receives the flat position in x of each winner.

    Scan order inside a window is (d, h, w) row-major and only a strictly larger
    value replaces the running max, so ties go to the first position.
    """
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], D = x.shape[2], H = x.shape[3], W = x.shape[4]
    cdef Py_ssize_t D2 = out.shape[2], H2 = out.shape[3], W2 = out.shape[4]
    cdef Py_ssize_t n, c, od, oh, ow, kd, kh, kw, d, h, w, slab, best_at
    cdef real best, v
    with nogil:
        for n in range(N):
            for c in range(C):
                slab = (n * C + c) * D * H * W
                for od in range(D2):
                    for oh in range(H2):
                        for ow in range(W2):
                            d = 2 * od
                            h = 2 * oh
                            w = 2 * ow
                            best = x[n, c, d, h, w]
                            best_at = slab + (d * H + h) * W + w
                            for kd in range(2):
                                for kh in range(2):
                                    for kw in range(2):
                                        v = x[n, c, d + kd, h + kh, w + kw]
                                        if v > best:
                                            best = v
                                            best_at = slab + ((d + kd) * H + h + kh) * W + w + kw
                            out[n, c, od, oh, ow] = best
                            idx[n, c, od, oh, ow] = best_at


def maxpool_backward(int64_t[::1] idx, real[::1] grad_out, real[::1] grad_in):
    """Route grad_out to the recorded winners (flattened views)."""
    cdef Py_ssize_t i, n = idx.shape[0]
    with nogil:
        for i in range(n):
            grad_in[idx[i]] += grad_out[i]
