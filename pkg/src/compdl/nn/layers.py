"""Forward/backward kernels for the layer types, NHWC layout.

Each ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad_same(x, size):
    p = size // 2
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))


def im2col(x, size, stride):
    """(N, H, W, C) -> (N, Ho, Wo, size*size*C) patches centred on the stride grid."""
    n, h, w, c = x.shape
    ho, wo = -(-h // stride), -(-w // stride)
    xp = _pad_same(x, size)
    win = sliding_window_view(xp, (size, size), axis=(1, 2))  # N, H', W', C, k, k
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # order patch entries as (ki, kj, c) to match kernel layout (k, k, C, F)
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n, ho, wo, size * size * c)


def col2im(dcols, x_shape, size, stride):
    n, h, w, c = x_shape
    ho, wo = dcols.shape[1], dcols.shape[2]
    p = size // 2
    dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dcols.dtype)
    d = dcols.reshape(n, ho, wo, size, size, c)
    for i in range(size):
        for j in range(size):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += d[:, :, :, i, j, :]
    return dxp[:, p : p + h, p : p + w, :]


def conv_forward(x, kernel, bias, stride):
    """Cross-correlation with 'same' zero padding sampled every ``stride`` pixels.

    ``kernel`` has shape (k, k, C_in, F); ``bias`` is (F,) or None.
    """
    k = kernel.shape[0]
    cols = im2col(x, k, stride)
    n, ho, wo, kk = cols.shape
    out = cols.reshape(-1, kk) @ kernel.reshape(kk, -1)
    if bias is not None:
        out += bias
    return out.reshape(n, ho, wo, -1), (x.shape, cols, kernel, stride, bias is not None)


def conv_backward(dout, cache):
    x_shape, cols, kernel, stride, has_bias = cache
    k = kernel.shape[0]
    kk = cols.shape[-1]
    d2 = dout.reshape(-1, dout.shape[-1])
    dkernel = (cols.reshape(-1, kk).T @ d2).reshape(kernel.shape)
    dbias = d2.sum(axis=0) if has_bias else None
    dcols = (d2 @ kernel.reshape(kk, -1).T).reshape(cols.shape)
    dx = col2im(dcols, x_shape, k, stride)
    return dx, dkernel, dbias


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def maxpool_forward(x, size=2):
    n, h, w, c = x.shape
    ho, wo = h // size, w // size
    xr = x[:, : ho * size, : wo * size, :].reshape(n, ho, size, wo, size, c)
    xr = xr.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, size * size)
    # argmax picks the first maximum in raster order of the window
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx, size)


def maxpool_backward(dout, cache):
    x_shape, idx, size = cache
    n, h, w, c = x_shape
    ho, wo = dout.shape[1], dout.shape[2]
    dwin = np.zeros((n, ho, wo, c, size * size), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, ho, wo, c, size, size).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, : ho * size, : wo * size, :] = dwin.reshape(n, ho * size, wo * size, c)
    return dx


def dense_forward(x, weight, bias):
    x2 = x.reshape(x.shape[0], -1)
    return x2 @ weight + bias, (x.shape, x2, weight)


def dense_backward(dout, cache):
    x_shape, x2, weight = cache
    dw = x2.T @ dout
    db = dout.sum(axis=0)
    dx = (dout @ weight.T).reshape(x_shape)
    return dx, dw, db


def dropout_forward(x, rate, rng):
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time."""
    if rate <= 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n
