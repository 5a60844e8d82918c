"""Parameter initialisation, forward pass and reverse-mode gradients."""
from __future__ import annotations

import math

import numpy as np

from . import layers as L
from .architectures import Conv, Dense, Dropout, MaxPool, NetworkSpec, ReLU, Softmax, _inputs

__all__ = ["init_params", "forward", "logits", "predict_proba", "loss_and_grads", "backward", "param_names"]

INIT_STD = 0.1


def param_names(spec: NetworkSpec) -> list:
    names = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            names.append(f"{i}.kernel")
            if layer.bias:
                names.append(f"{i}.bias")
        elif isinstance(layer, (Dense, Softmax)):
            names += [f"{i}.weight", f"{i}.bias"]
    return names


def init_params(spec: NetworkSpec, rng: np.random.Generator, std: float = INIT_STD, dtype=np.float64) -> dict:
    """Weights ~ N(0, std^2), biases zero."""
    params = {}
    for i, (layer, shape) in enumerate(_inputs(spec)):
        if isinstance(layer, Conv):
            kshape = (layer.size, layer.size, shape[-1], layer.filters)
            params[f"{i}.kernel"] = (std * rng.standard_normal(kshape)).astype(dtype)
            if layer.bias:
                params[f"{i}.bias"] = np.zeros(layer.filters, dtype=dtype)
        elif isinstance(layer, (Dense, Softmax)):
            out = layer.units if isinstance(layer, Dense) else layer.classes
            params[f"{i}.weight"] = (std * rng.standard_normal((math.prod(shape), out))).astype(dtype)
            params[f"{i}.bias"] = np.zeros(out, dtype=dtype)
    return params


def _check_batch(spec, x):
    x = np.asarray(x)
    h, w, c = spec.input_shape
    if x.ndim == 3 and c == 1:
        x = x[..., None]
    if x.ndim != 4 or x.shape[1:] != (h, w, c):
        raise ValueError(f"batch shape {x.shape} does not match network input (N, {h}, {w}, {c})")
    return x


def _run(spec, params, x, train, rng, keep_cache):
    caches = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            x, cache = L.conv_forward(x, params[f"{i}.kernel"], params.get(f"{i}.bias"), layer.stride)
        elif isinstance(layer, ReLU):
            x, cache = L.relu_forward(x)
        elif isinstance(layer, MaxPool):
            x, cache = L.maxpool_forward(x, layer.size)
        elif isinstance(layer, (Dense, Softmax)):
            x, cache = L.dense_forward(x, params[f"{i}.weight"], params[f"{i}.bias"])
        elif isinstance(layer, Dropout):
            if train:
                x, cache = L.dropout_forward(x, layer.rate, rng)
            else:
                cache = None
        else:
            raise TypeError(f"unknown layer {layer!r}")
        if keep_cache:
            caches.append(cache)
    return x, caches


def logits(spec: NetworkSpec, params: dict, batch, train: bool = False, rng=None) -> np.ndarray:
    """Pre-softmax scores of the output layer."""
    if train and rng is None:
        raise ValueError("train mode needs an rng for dropout")
    out, _ = _run(spec, params, _check_batch(spec, batch), train, rng, keep_cache=False)
    return out


def forward(spec: NetworkSpec, params: dict, batch, train: bool = False, rng=None) -> np.ndarray:
    """Class probabilities, one row per sample."""
    return L.softmax(logits(spec, params, batch, train, rng))


def predict_proba(spec, params, images, batch_size: int = 500) -> np.ndarray:
    out = [forward(spec, params, images[i : i + batch_size]) for i in range(0, len(images), batch_size)]
    return np.concatenate(out, axis=0)


def loss_and_grads(spec: NetworkSpec, params: dict, batch, labels, train: bool = True, rng=None):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    x = _check_batch(spec, batch)
    labels = np.asarray(labels)
    if labels.shape != (x.shape[0],):
        raise ValueError(f"{labels.shape[0] if labels.ndim else 0} labels for a batch of {x.shape[0]}")
    if train and rng is None and any(isinstance(l, Dropout) for l in spec.layers):
        raise ValueError("train mode needs an rng for dropout")
    out, caches = _run(spec, params, x, train, rng, keep_cache=True)
    loss, d = L.softmax_cross_entropy(out, labels)
    grads = {}
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, cache = spec.layers[i], caches[i]
        if isinstance(layer, Conv):
            d, dk, db = L.conv_backward(d, cache)
            grads[f"{i}.kernel"] = dk
            if db is not None:
                grads[f"{i}.bias"] = db
        elif isinstance(layer, ReLU):
            d = L.relu_backward(d, cache)
        elif isinstance(layer, MaxPool):
            d = L.maxpool_backward(d, cache)
        elif isinstance(layer, (Dense, Softmax)):
            d, dw, db = L.dense_backward(d, cache)
            grads[f"{i}.weight"] = dw
            grads[f"{i}.bias"] = db
        elif isinstance(layer, Dropout):
            d = L.dropout_backward(d, cache)
    return loss, grads


def backward(spec: NetworkSpec, params: dict, batch, labels, train: bool = False, rng=None) -> dict:
    """Gradients of the mean cross-entropy; dropout off unless ``train``."""
    return loss_and_grads(spec, params, batch, labels, train=train, rng=rng)[1]
