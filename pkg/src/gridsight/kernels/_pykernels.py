"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with identical
semantics and output layout; the test suite checks them against each other.
"""

import numpy as np

_OFFSETS = [(di, dj) for di in range(3) for dj in range(3)]


def im2col3x3(x):
    """Unfold 3x3 zero-padded neighbourhoods.

    ``x`` is N x C x H x W; the result is (N*H*W) x (C*9) with column index
    ``c*9 + di*3 + dj`` so that it matches ``weight.reshape(O, C*9)``.
    """
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((n, h, w, c, 9), dtype=x.dtype)
    for k, (di, dj) in enumerate(_OFFSETS):
        cols[..., k] = xp[:, :, di:di + h, dj:dj + w].transpose(0, 2, 3, 1)
    return cols.reshape(n * h * w, c * 9)


def col2im3x3(cols, n, c, h, w):
    """Adjoint of :func:`im2col3x3`: scatter-add columns back to N x C x H x W."""
    cols = np.ascontiguousarray(cols).reshape(n, h, w, c, 9)
    xp = np.zeros((n, c, h + 2, w + 2), dtype=cols.dtype)
    for k, (di, dj) in enumerate(_OFFSETS):
        xp[:, :, di:di + h, dj:dj + w] += cols[..., k].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(xp[:, :, 1:-1, 1:-1])


def maxpool2_forward(x):
    """2x2/stride-2 max pool. Returns (out, argmax) with argmax in 0..3
    (row-major within the window, first occurrence wins on ties)."""
    n, c, h, w = x.shape
    win = (
        np.asarray(x)
        .reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    arg = win.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2_backward(dout, arg):
    n, c, h2, w2 = dout.shape
    win = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(win, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx.reshape(n, c, h2 * 2, w2 * 2))


def vote(cells, classes, ncells):
    """Per-cell majority vote over four classes.

    Returns (winner uint8[ncells], counts int64[ncells, 4]). Ties go to the
    lowest class id; cells without votes get class 0.
    """
    cells = np.asarray(cells, dtype=np.int64)
    classes = np.asarray(classes, dtype=np.int64)
    counts = np.bincount(cells * 4 + classes, minlength=ncells * 4).reshape(ncells, 4)
    return counts.argmax(axis=1).astype(np.uint8), counts.astype(np.int64)
