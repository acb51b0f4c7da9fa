"""Differentiable layers used by the encoder-decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .tensor import Tensor


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1 (output keeps H x W)."""
    n, c, h, w = x.shape
    o, wc, kh, kw = weight.shape
    if (kh, kw) != (3, 3):
        raise ValueError(f"conv2d needs a 3x3 kernel, got {kh}x{kw}")
    if wc != c:
        raise ValueError(f"conv2d channel mismatch: input {c}, weight {wc}")
    if bias.shape != (o,):
        raise ValueError(f"conv2d bias shape {bias.shape} != ({o},)")
    cols = kernels.im2col3x3(x.data)
    wmat = weight.data.reshape(o, c * 9)
    out = cols @ wmat.T
    out += bias.data
    out = np.ascontiguousarray(out.reshape(n, h, w, o).transpose(0, 3, 1, 2))

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * h * w, o)
        dw = (gmat.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        db = gmat.sum(axis=0) if bias.requires_grad else None
        dx = kernels.col2im3x3(gmat @ wmat, n, c, h, w) if x.requires_grad else None
        return dx, dw, db

    return Tensor._from_op(out, (x, weight, bias), backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pool, stride 2. Gradient goes to the first maximal element."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    out, arg = kernels.maxpool2_forward(x.data)
    return Tensor._from_op(out, (x,), lambda g: (kernels.maxpool2_backward(g, arg),))


def upconv2(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Transposed convolution, 2x2 kernel, stride 2. ``weight`` is C_in x C_out x 2 x 2."""
    n, c, h, w = x.shape
    wc, o, kh, kw = weight.shape
    if (kh, kw) != (2, 2) or wc != c:
        raise ValueError(f"upconv2 weight {weight.shape} incompatible with input {x.shape}")
    if bias.shape != (o,):
        raise ValueError(f"upconv2 bias shape {bias.shape} != ({o},)")
    xmat = x.data.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    wmat = weight.data.reshape(c, o * 4)
    out = (xmat @ wmat).reshape(n, h, w, o, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(n, o, 2 * h, 2 * w)
    out = out + bias.data[None, :, None, None]

    def backward(g):
        gmat = g.reshape(n, o, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5).reshape(n * h * w, o * 4)
        dx = None
        if x.requires_grad:
            dx = np.ascontiguousarray((gmat @ wmat.T).reshape(n, h, w, c).transpose(0, 3, 1, 2))
        dw = (xmat.T @ gmat).reshape(weight.shape) if weight.requires_grad else None
        db = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return dx, dw, db

    return Tensor._from_op(np.ascontiguousarray(out), (x, weight, bias), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` with x: N x D, weight: D x E."""
    if x.data.ndim != 2 or weight.shape[0] != x.shape[1] or bias.shape != (weight.shape[1],):
        raise ValueError(f"linear shapes incompatible: x {x.shape}, w {weight.shape}, b {bias.shape}")
    out = x.data @ weight.data + bias.data

    def backward(g):
        return (
            g @ weight.data.T if x.requires_grad else None,
            x.data.T @ g if weight.requires_grad else None,
            g.sum(axis=0) if bias.requires_grad else None,
        )

    return Tensor._from_op(out, (x, weight, bias), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,))


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.running_mean.copy(), self.running_var.copy(), self.momentum, self.eps)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Per-channel normalisation over N (and H, W for 4-D inputs).

    Training mode uses batch statistics and updates the running estimates
    (unbiased variance); eval mode uses the running estimates.
    """
    data = x.data
    if data.ndim == 4:
        axes, bshape = (0, 2, 3), (1, -1, 1, 1)
    elif data.ndim == 2:
        axes, bshape = (0,), (1, -1)
    else:
        raise ValueError(f"batchnorm expects 2-D or 4-D input, got {data.ndim}-D")
    c = data.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError("batchnorm affine parameters do not match channel count")
    dt = data.dtype
    g_ = gamma.data.reshape(bshape)
    if training:
        if data.shape[0] < 2:
            raise ValueError("batchnorm in training mode needs a batch of at least 2")
        m = data.size // c
        mean = data.mean(axis=axes, dtype=np.float64)
        var = data.var(axis=axes, dtype=np.float64)
        mom = state.momentum
        state.running_mean[...] = (1 - mom) * state.running_mean + mom * mean
        state.running_var[...] = (1 - mom) * state.running_var + mom * var * m / (m - 1)
        inv_std = (1.0 / np.sqrt(var + state.eps)).astype(dt).reshape(bshape)
        xhat = (data - mean.astype(dt).reshape(bshape)) * inv_std
        out = xhat * g_ + beta.data.reshape(bshape)

        def backward(g):
            dgamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
            dbeta = g.sum(axis=axes) if beta.requires_grad else None
            dx = None
            if x.requires_grad:
                dxhat = g * g_
                s1 = dxhat.sum(axis=axes).reshape(bshape)
                s2 = (dxhat * xhat).sum(axis=axes).reshape(bshape)
                dx = (inv_std / m) * (m * dxhat - s1 - xhat * s2)
            return dx, dgamma, dbeta
    else:
        inv_std = (1.0 / np.sqrt(state.running_var.astype(np.float64) + state.eps)).astype(dt).reshape(bshape)
        xhat = (data - state.running_mean.astype(dt).reshape(bshape)) * inv_std
        out = xhat * g_ + beta.data.reshape(bshape)

        def backward(g):
            return (
                g * g_ * inv_std if x.requires_grad else None,
                (g * xhat).sum(axis=axes) if gamma.requires_grad else None,
                g.sum(axis=axes) if beta.requires_grad else None,
            )

    return Tensor._from_op(out.astype(dt, copy=False), (x, gamma, beta), backward)


def softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _check_one_hot(target: np.ndarray, axis: int) -> None:
    if not np.isin(target, (0, 1)).all() or not (target.sum(axis=axis) == 1).all():
        raise ValueError("target is not one-hot along the class axis")


def softmax_ce(logits: Tensor, target) -> Tensor:
    """Mean over N*H*W cells of -log softmax(logits)[target class].

    ``target`` is a one-hot array with the same shape as ``logits`` (class
    axis 1); it is treated as a constant.
    """
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if t.shape != logits.shape:
        raise ValueError(f"target shape {t.shape} != logits shape {logits.shape}")
    _check_one_hot(t, 1)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    cells = logits.data.size // logits.shape[1]
    dt = logits.dtype
    loss = np.asarray(-(logp * t).sum(dtype=np.float64) / cells, dtype=dt)

    def backward(g):
        return ((np.exp(logp) - t).astype(dt) * (g / cells),)

    return Tensor._from_op(loss, (logits,), backward)


def kl_diag_gaussian(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dims, averaged over the batch."""
    if mu.shape != logvar.shape:
        raise ValueError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    n = mu.shape[0]
    dt = mu.dtype
    ev = np.exp(logvar.data)
    total = -0.5 * (1.0 + logvar.data.astype(np.float64) - mu.data.astype(np.float64) ** 2 - ev).sum()
    loss = np.asarray(total / n, dtype=dt)

    def backward(g):
        return (mu.data * (g / n)), (-0.5 * (1.0 - ev) * (g / n)).astype(dt)

    return Tensor._from_op(loss, (mu, logvar), backward)
