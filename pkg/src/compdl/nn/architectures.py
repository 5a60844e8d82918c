"""Network descriptions, closed-form weight and FLOP counts.

A :class:`NetworkSpec` is a flat, immutable list of layer records plus the
input shape ``(height, width, channels)``.  Tensors are laid out NHWC.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

__all__ = [
    "Conv",
    "ReLU",
    "MaxPool",
    "Dense",
    "Dropout",
    "Softmax",
    "NetworkSpec",
    "layer_shapes",
    "weight_count",
    "flop_count",
    "build_architecture",
    "build_reduced_architecture",
    "pnn_wrap",
    "strip_zeroth",
    "POOLING_BY_SIDE",
    "REDUCED_FILTERS",
    "spec_to_dict",
    "spec_from_dict",
]


@dataclass(frozen=True)
class Conv:
    filters: int
    size: int = 5
    stride: int = 1
    bias: bool = True


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    size: int = 2


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.4


@dataclass(frozen=True)
class Softmax:
    """Fully connected output layer followed by a softmax."""

    classes: int = 10


Layer = Union[Conv, ReLU, MaxPool, Dense, Dropout, Softmax]


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple  # (height, width, channels)
    layers: tuple = field(default_factory=tuple)
    name: str = ""

    @property
    def has_zeroth(self) -> bool:
        first = self.layers[0] if self.layers else None
        return isinstance(first, Conv) and first.filters == 1 and not first.bias


def _conv_out(size: int, stride: int) -> int:
    # 'same' padding
    return -(-size // stride)


def layer_shapes(spec: NetworkSpec) -> list:
    """Output shape of every layer, in order."""
    h, w, c = spec.input_shape
    shapes = []
    flat = None
    for layer in spec.layers:
        if isinstance(layer, Conv):
            if flat is not None:
                raise ValueError("Conv layer after a dense layer")
            h, w, c = _conv_out(h, layer.stride), _conv_out(w, layer.stride), layer.filters
            shapes.append((h, w, c))
        elif isinstance(layer, MaxPool):
            if flat is not None:
                raise ValueError("MaxPool after a dense layer")
            h, w = h // layer.size, w // layer.size
            if h == 0 or w == 0:
                raise ValueError("MaxPool reduces the feature map to nothing")
            shapes.append((h, w, c))
        elif isinstance(layer, (Dense, Softmax)):
            flat = layer.units if isinstance(layer, Dense) else layer.classes
            shapes.append((flat,))
        elif isinstance(layer, (ReLU, Dropout)):
            shapes.append(shapes[-1] if shapes else (h, w, c))
        else:
            raise TypeError(f"unknown layer {layer!r}")
    return shapes


def _inputs(spec: NetworkSpec):
    """Yield (layer, input_shape) pairs."""
    prev = tuple(spec.input_shape)
    for layer, out in zip(spec.layers, layer_shapes(spec)):
        yield layer, prev
        prev = out


def weight_count(spec: NetworkSpec) -> int:
    total = 0
    for layer, shape in _inputs(spec):
        if isinstance(layer, Conv):
            per_filter = layer.size * layer.size * shape[-1] + (1 if layer.bias else 0)
            total += per_filter * layer.filters
        elif isinstance(layer, (Dense, Softmax)):
            fan_in = math.prod(shape)
            out = layer.units if isinstance(layer, Dense) else layer.classes
            total += (fan_in + 1) * out
    return total


def flop_count(spec: NetworkSpec) -> int:
    """FLOPs of one forward pass: 2 x multiply-accumulates of conv and dense layers.

    Bias additions, pooling, activations, dropout and the softmax output layer
    are not counted.
    """
    macs = 0
    for layer, (shape_in, shape_out) in zip(spec.layers, zip(_in_shapes(spec), layer_shapes(spec))):
        if isinstance(layer, Conv):
            ho, wo, f = shape_out
            macs += ho * wo * f * layer.size * layer.size * shape_in[-1]
        elif isinstance(layer, Dense):
            macs += math.prod(shape_in) * layer.units
    return 2 * macs


def _in_shapes(spec):
    return [shape for _, shape in _inputs(spec)]


# input side -> (pool after first conv, pool after second conv)
POOLING_BY_SIDE = {
    28: (True, True),
    14: (True, False),
    10: (True, False),
    7: (False, False),
    6: (False, False),
    5: (False, False),
}

REDUCED_FILTERS = {1: (32, 64), 2: (16, 32), 3: (8, 16), 4: (4, 8), 5: (2, 4)}


def _classifier(input_shape, filters1, filters2, pool1, pool2, dropout=0.4, name=""):
    layers = [Conv(filters1), ReLU()]
    if pool1:
        layers.append(MaxPool(2))
    layers += [Conv(filters2), ReLU()]
    if pool2:
        layers.append(MaxPool(2))
    layers += [Dense(256), ReLU(), Dropout(dropout), Softmax(10)]
    return NetworkSpec(tuple(input_shape), tuple(layers), name=name)


def build_architecture(input_dims, channels: int = 1, dropout: float = 0.4) -> NetworkSpec:
    """Classifier for square inputs of side 28, 14, 10, 7, 6 or 5."""
    h, w = input_dims
    if h != w or h not in POOLING_BY_SIDE:
        raise ValueError(
            f"no built-in architecture for {h}x{w} inputs "
            f"(supported: {sorted(POOLING_BY_SIDE)}); pass an explicit NetworkSpec"
        )
    pool1, pool2 = POOLING_BY_SIDE[h]
    return _classifier((h, w, channels), 32, 64, pool1, pool2, dropout, name=f"auto{h}x{w}")


def build_reduced_architecture(index: int, dropout: float = 0.4) -> NetworkSpec:
    """Reduced-filter networks for 5x5 inputs, index 1 (largest) to 5 (smallest)."""
    if index not in REDUCED_FILTERS:
        raise ValueError(f"reduced architecture index must be in 1..5, got {index}")
    f1, f2 = REDUCED_FILTERS[index]
    return _classifier((5, 5, 1), f1, f2, False, False, dropout, name=f"reduced:{index}")


def pnn_wrap(spec: NetworkSpec, stride: int, image_shape=(28, 28), size: int = 5) -> NetworkSpec:
    """Prepend a single-filter, bias-free strided conv layer to ``spec``."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    h, w = image_shape
    expected = (_conv_out(h, stride), _conv_out(w, stride), 1)
    if tuple(spec.input_shape) != expected:
        raise ValueError(
            f"spec expects input {spec.input_shape}, but a stride-{stride} zeroth layer "
            f"on {h}x{w} images produces {expected}"
        )
    zeroth = Conv(filters=1, size=size, stride=stride, bias=False)
    return replace(spec, input_shape=(h, w, 1), layers=(zeroth,) + tuple(spec.layers),
                   name=f"pnn{stride}:{spec.name}")


def strip_zeroth(spec: NetworkSpec) -> NetworkSpec:
    """Inverse of :func:`pnn_wrap`."""
    if not spec.has_zeroth:
        raise ValueError("spec has no zeroth layer")
    rest = spec.layers[1:]
    shape = layer_shapes(spec)[0]
    name = spec.name.split(":", 1)[1] if ":" in spec.name else spec.name
    return replace(spec, input_shape=shape, layers=rest, name=name)


_LAYER_TYPES = {cls.__name__: cls for cls in (Conv, ReLU, MaxPool, Dense, Dropout, Softmax)}


def spec_to_dict(spec: NetworkSpec) -> dict:
    layers = [{"type": type(layer).__name__, **vars(layer)} for layer in spec.layers]
    return {"input_shape": list(spec.input_shape), "layers": layers, "name": spec.name}


def spec_from_dict(d: dict) -> NetworkSpec:
    layers = []
    for entry in d["layers"]:
        entry = dict(entry)
        cls = _LAYER_TYPES[entry.pop("type")]
        layers.append(cls(**entry))
    return NetworkSpec(tuple(d["input_shape"]), tuple(layers), name=d.get("name", ""))
