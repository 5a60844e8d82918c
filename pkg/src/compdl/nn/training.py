"""Seeded mini-batch training and the PNN zeroth-layer split."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .architectures import NetworkSpec, strip_zeroth
from .network import init_params, loss_and_grads, predict_proba
from .optim import AdamState

__all__ = ["TrainConfig", "TrainState", "init_state", "run_epoch", "train", "accuracy", "extract_pnn_filter", "split_pnn"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    dropout: float = 0.4
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0


@dataclass
class TrainState:
    params: dict
    adam: AdamState
    shuffle_rng: np.random.Generator
    dropout_rng: np.random.Generator
    epoch: int = 0
    history: list = field(default_factory=list)  # per-epoch mean train loss


def init_state(spec: NetworkSpec, config: TrainConfig) -> TrainState:
    init_ss, shuffle_ss, dropout_ss = np.random.SeedSequence(config.seed).spawn(3)
    params = init_params(spec, np.random.default_rng(init_ss))
    return TrainState(
        params=params,
        adam=AdamState(lr=config.lr),
        shuffle_rng=np.random.default_rng(shuffle_ss),
        dropout_rng=np.random.default_rng(dropout_ss),
    )


def run_epoch(spec: NetworkSpec, state: TrainState, images, labels, batch_size: int) -> float:
    n = len(images)
    order = state.shuffle_rng.permutation(n)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        loss, grads = loss_and_grads(spec, state.params, images[idx], labels[idx], train=True, rng=state.dropout_rng)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss at epoch {state.epoch + 1}")
        state.adam.update(state.params, grads)
        total += loss * len(idx)
    state.epoch += 1
    mean = total / n
    state.history.append(mean)
    return mean


def train(spec: NetworkSpec, images, labels, config: TrainConfig = TrainConfig(), state: TrainState | None = None,
          on_epoch=None) -> TrainState:
    """Train until ``config.epochs`` epochs are done; a passed ``state`` is resumed.

    ``on_epoch(state, loss)`` is called after every epoch.
    """
    images = np.asarray(images)
    labels = np.asarray(labels)
    if len(images) == 0:
        raise ValueError("cannot train on an empty dataset")
    if state is None:
        state = init_state(spec, config)
    while state.epoch < config.epochs:
        loss = run_epoch(spec, state, images, labels, config.batch_size)
        if on_epoch is not None:
            on_epoch(state, loss)
    return state


def accuracy(spec: NetworkSpec, params: dict, images, labels, batch_size: int = 500) -> float:
    probs = predict_proba(spec, params, images, batch_size)
    return float(np.mean(probs.argmax(axis=1) == np.asarray(labels)))


def extract_pnn_filter(spec: NetworkSpec, params: dict) -> np.ndarray:
    """The trained single-channel zeroth-layer kernel, shape (k, k)."""
    if not spec.has_zeroth:
        raise ValueError("network has no zeroth layer")
    kernel = params["0.kernel"]
    return np.array(kernel[:, :, 0, 0], copy=True)


def split_pnn(spec: NetworkSpec, params: dict):
    """Detach the zeroth layer: returns (kernel, stride, rest_spec, rest_params)."""
    rest = strip_zeroth(spec)
    rest_params = {}
    for name, value in params.items():
        idx, kind = name.split(".")
        if idx != "0":
            rest_params[f"{int(idx) - 1}.{kind}"] = value
    return extract_pnn_filter(spec, params), spec.layers[0].stride, rest, rest_params
