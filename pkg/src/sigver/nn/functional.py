"""Forward and backward passes for every layer kind, NCHW layout.

Each ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. All ops work in whatever float
dtype they are given, so gradient checks can run in float64 while training
stays in float32.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ShapeError


def conv_output_size(n: int, kernel: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - kernel) // stride + 1


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N, C, OH, OW, kh, kw) view, no copy
    return sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d_forward(x, w, b, stride: int = 1, pad: int = 0):
    """Cross-correlation of ``x`` (N, C, H, W) with ``w`` (F, C, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weights, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    f, wc, kh, kw = w.shape
    if c != wc:
        raise ShapeError(f"input has {c} channels, weights expect {wc}")
    if kh > h + 2 * pad or kw > wd + 2 * pad:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{wd + 2 * pad}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _windows(xp, kh, kw, stride)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, OH, OW, F)
    out = out.transpose(0, 3, 1, 2) + b.reshape(1, f, 1, 1)
    return np.ascontiguousarray(out), (x.shape, xp, w, stride, pad)


def conv2d_backward(grad_out, cache):
    x_shape, xp, w, stride, pad = cache
    f, c, kh, kw = w.shape
    n, _, oh, ow = grad_out.shape
    if grad_out.shape[1] != f:
        raise ShapeError(f"grad has {grad_out.shape[1]} channels, layer has {f} filters")
    cols = _windows(xp, kh, kw, stride)
    grad_w = np.tensordot(grad_out, cols, axes=([0, 2, 3], [0, 2, 3]))
    grad_b = grad_out.sum(axis=(0, 2, 3))
    gcols = np.tensordot(grad_out, w, axes=([1], [0]))  # (N, OH, OW, C, kh, kw)
    gcols = gcols.transpose(0, 3, 1, 2, 4, 5)
    grad_xp = np.zeros(xp.shape, dtype=grad_out.dtype)
    for i in range(kh):
        for j in range(kw):
            grad_xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += gcols[..., i, j]
    h, wd = x_shape[2], x_shape[3]
    grad_x = grad_xp[:, :, pad:pad + h, pad:pad + wd]
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def _channel_window_sum(a: np.ndarray, before: int, after: int) -> np.ndarray:
    """Sum over channels ``c-before .. c+after`` (truncated at the edges)."""
    nc = a.shape[1]
    csum = np.cumsum(a, axis=1)
    zero = np.zeros_like(a[:, :1])
    csum = np.concatenate([zero, csum], axis=1)
    idx = np.arange(nc)
    hi = np.minimum(idx + after + 1, nc)
    lo = np.maximum(idx - before, 0)
    return csum[:, hi] - csum[:, lo]


def lrn_forward(x, alpha: float = 1e-4, beta: float = 0.75, k: float = 2.0, n: int = 5):
    """Cross-channel local response normalization.

    ``b_c = a_c / (k + alpha * sum(a_j^2 for j in window(c)))^beta``; the
    window holds ``n`` adjacent channels centered on ``c``.
    """
    if x.ndim < 2 or x.shape[1] < 1:
        raise ShapeError("lrn needs a channel axis")
    if n < 1:
        raise ConfigError("lrn window size must be >= 1")
    before, after = (n - 1) // 2, n // 2
    scale = k + alpha * _channel_window_sum(x * x, before, after)
    inv = scale ** -beta
    return x * inv, (x, scale, inv, alpha, beta, before, after)


def lrn_backward(grad_out, cache):
    x, scale, inv, alpha, beta, before, after = cache
    # channel i contributes to output j when j is in window(i); that is the mirrored window
    t = grad_out * x * inv / scale
    return grad_out * inv - 2.0 * alpha * beta * x * _channel_window_sum(t, after, before)


def maxpool_forward(x, size: int = 3, stride: int = 2):
    n, c, h, w = x.shape
    if size > h or size > w:
        raise ShapeError(f"pool window {size} larger than input {h}x{w}")
    win = _windows(x, size, size, stride)
    oh, ow = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, oh, ow, size * size)
    arg = flat.argmax(axis=-1)  # first maximum in row-major window order
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, size, stride)


def maxpool_backward(grad_out, cache):
    x_shape, arg, size, stride = cache
    oh, ow = arg.shape[2], arg.shape[3]
    grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
    for pos in range(size * size):
        i, j = divmod(pos, size)
        grad_x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += np.where(arg == pos, grad_out, 0)
    return grad_x


def fc_forward(x, w, b):
    """``out = W @ in + b`` per sample; ``w`` is (out, in), ``x`` is flattened."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != w.shape[1]:
        raise ShapeError(f"fc expects {w.shape[1]} inputs, got {flat.shape[1]}")
    return flat @ w.T + b, (x.shape, flat, w)


def fc_backward(grad_out, cache):
    x_shape, flat, w = cache
    if grad_out.shape[1] != w.shape[0]:
        raise ShapeError(f"grad width {grad_out.shape[1]} != fc width {w.shape[0]}")
    grad_x = (grad_out @ w).reshape(x_shape)
    return grad_x, grad_out.T @ flat, grad_out.sum(axis=0)


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype, copy=False), mask


def relu_backward(grad_out, mask):
    return np.where(mask, grad_out, 0).astype(grad_out.dtype, copy=False)


def dropout_forward(x, p: float, train: bool, rng: np.random.Generator | None = None):
    """Inverted dropout: survivors are scaled by ``1/(1-p)`` in train mode."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("train-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * keep, keep


def dropout_backward(grad_out, keep):
    return grad_out if keep is None else grad_out * keep


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy of a batch and its gradient w.r.t. the logits.

    ``logits`` may be (K,) for a single sample or (N, K) with integer
    ``labels`` of length N.
    """
    single = logits.ndim == 1
    z = np.atleast_2d(logits)
    y = np.atleast_1d(np.asarray(labels))
    if y.shape[0] != z.shape[0]:
        raise ShapeError("one label per sample required")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise ShapeError(f"labels must lie in [0, {z.shape[1]})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    loss = float(np.mean(log_norm - shifted[rows, y]))
    grad = softmax(z)
    grad[rows, y] -= 1.0
    grad /= z.shape[0]
    return loss, (grad[0] if single else grad)
