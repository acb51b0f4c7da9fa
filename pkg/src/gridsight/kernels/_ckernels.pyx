# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def im2col3x3(x):
    x = np.ascontiguousarray(x)
    if x.dtype == np.float32:
        return _im2col[float](x)
    return _im2col[double](np.asarray(x, dtype=np.float64))


cdef _im2col(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ch, i, j, di, dj, ii, jj, row, col
    if floating is float:
        out = np.empty((n * h * w, c * 9), dtype=np.float32)
    else:
        out = np.empty((n * h * w, c * 9), dtype=np.float64)
    cdef floating[:, ::1] o = out
    with nogil:
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    row = (b * h + i) * w + j
                    for ch in range(c):
                        col = ch * 9
                        for di in range(3):
                            ii = i + di - 1
                            for dj in range(3):
                                jj = j + dj - 1
                                if ii >= 0 and ii < h and jj >= 0 and jj < w:
                                    o[row, col] = x[b, ch, ii, jj]
                                else:
                                    o[row, col] = 0
                                col += 1
    return out


def col2im3x3(cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w):
    cols = np.ascontiguousarray(cols)
    if cols.dtype == np.float32:
        return _col2im[float](cols, n, c, h, w)
    return _col2im[double](np.asarray(cols, dtype=np.float64), n, c, h, w)


cdef _col2im(floating[:, ::1] cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t b, ch, i, j, di, dj, ii, jj
    if floating is float:
        out = np.zeros((n, c, h, w), dtype=np.float32)
    else:
        out = np.zeros((n, c, h, w), dtype=np.float64)
    cdef floating[:, :, :, ::1] o = out
    cdef floating acc
    # gather: each output element sums its nine terms in offset order,
    # the same sequence as the numpy fallback, so results are bit-identical
    with nogil:
        for b in range(n):
            for ii in range(h):
                for jj in range(w):
                    for ch in range(c):
                        acc = 0
                        for di in range(3):
                            i = ii - di + 1
                            if i < 0 or i >= h:
                                continue
                            for dj in range(3):
                                j = jj - dj + 1
                                if j < 0 or j >= w:
                                    continue
                                acc = acc + cols[(b * h + i) * w + j, ch * 9 + di * 3 + dj]
                        o[b, ch, ii, jj] = acc
    return out


def maxpool2_forward(x):
    x = np.ascontiguousarray(x)
    if x.dtype == np.float32:
        return _pool_fwd[float](x)
    return _pool_fwd[double](np.asarray(x, dtype=np.float64))


cdef _pool_fwd(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h2 = x.shape[2] // 2, w2 = x.shape[3] // 2
    cdef Py_ssize_t b, ch, i, j, k
    cdef floating best, v
    cdef signed char arg
    if floating is float:
        out = np.empty((n, c, h2, w2), dtype=np.float32)
    else:
        out = np.empty((n, c, h2, w2), dtype=np.float64)
    args = np.empty((n, c, h2, w2), dtype=np.int8)
    cdef floating[:, :, :, ::1] o = out
    cdef signed char[:, :, :, ::1] a = args
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(h2):
                    for j in range(w2):
                        best = x[b, ch, 2 * i, 2 * j]
                        arg = 0
                        for k in range(1, 4):
                            v = x[b, ch, 2 * i + k // 2, 2 * j + k % 2]
                            if v > best:
                                best = v
                                arg = <signed char>k
                        o[b, ch, i, j] = best
                        a[b, ch, i, j] = arg
    return out, args


def maxpool2_backward(dout, arg):
    dout = np.ascontiguousarray(dout)
    arg = np.ascontiguousarray(arg, dtype=np.int8)
    if dout.dtype == np.float32:
        return _pool_bwd[float](dout, arg)
    return _pool_bwd[double](np.asarray(dout, dtype=np.float64), arg)


cdef _pool_bwd(floating[:, :, :, ::1] dout, signed char[:, :, :, ::1] arg):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], h2 = dout.shape[2], w2 = dout.shape[3]
    cdef Py_ssize_t b, ch, i, j, k
    if floating is float:
        out = np.zeros((n, c, 2 * h2, 2 * w2), dtype=np.float32)
    else:
        out = np.zeros((n, c, 2 * h2, 2 * w2), dtype=np.float64)
    cdef floating[:, :, :, ::1] o = out
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(h2):
                    for j in range(w2):
                        k = arg[b, ch, i, j]
                        o[b, ch, 2 * i + k // 2, 2 * j + k % 2] = dout[b, ch, i, j]
    return out


def vote(cells, classes, Py_ssize_t ncells):
    cdef cnp.int64_t[::1] cv = np.ascontiguousarray(cells, dtype=np.int64)
    cdef cnp.int64_t[::1] kv = np.ascontiguousarray(classes, dtype=np.int64)
    counts = np.zeros((ncells, 4), dtype=np.int64)
    winner = np.zeros(ncells, dtype=np.uint8)
    cdef cnp.int64_t[:, ::1] cnt = counts
    cdef cnp.uint8_t[::1] win = winner
    cdef Py_ssize_t p, q, k, best
    with nogil:
        for p in range(cv.shape[0]):
            cnt[cv[p], kv[p]] += 1
        for q in range(ncells):
            best = 0
            for k in range(1, 4):
                if cnt[q, k] > cnt[q, best]:
                    best = k
            win[q] = <cnp.uint8_t>best
    return winner, counts
