"""The five preprocessing methods behind one interface.

Every compressor maps an ``m x n`` image (or a stack of them) at stride ``k``
to a ``ceil(m/k) x ceil(n/k)`` array.  PCA natively yields ``s`` coefficients;
:meth:`CompressorSpec.apply` reshapes them onto the same grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import layers as L
from .pca import PcaProjection, fit_pca, pca_compress
from .subsample import SubsampledProjection, build_projection, compress, grid_sampler

__all__ = [
    "METHODS",
    "CompressorSpec",
    "output_dims",
    "compression_rate",
    "downsample",
    "strided_correlate",
    "random_filter",
    "random_conv",
    "make_compressor",
]

METHODS = ("downsample", "random-conv", "pca", "circulant", "pnn")
FILTER_SIZE = 5


def output_dims(m: int, n: int, stride: int) -> tuple:
    return (-(-m // stride), -(-n // stride))


def compression_rate(m: int, n: int, stride: int) -> float:
    h, w = output_dims(m, n, stride)
    return (m * n) / (h * w)


def _check_stride(k):
    if int(k) != k or k < 1:
        raise ValueError(f"stride must be a positive integer, got {k}")


def downsample(image, k: int) -> np.ndarray:
    _check_stride(k)
    image = np.asarray(image)
    return image[..., ::k, ::k].copy()


def strided_correlate(images, kernel, k: int) -> np.ndarray:
    """Single-filter 'same' zero-padded correlation sampled on the stride grid.

    Uses the conv kernel of the network stack, so a filter detached from a
    trained zeroth layer reproduces that layer exactly.
    """
    _check_stride(k)
    images = np.asarray(images, dtype=np.float64)
    single = images.ndim == 2
    batch = images[None] if single else images
    kernel = np.asarray(kernel, dtype=np.float64)
    out, _ = L.conv_forward(batch[..., None], kernel[:, :, None, None], None, k)
    out = out[..., 0]
    return out[0] if single else out


def random_filter(seed: int, size: int = FILTER_SIZE) -> np.ndarray:
    """i.i.d. standard normal ``size x size`` filter."""
    return np.random.default_rng(seed).standard_normal((size, size))


def random_conv(image, k: int, seed: int | None = None, kernel=None) -> np.ndarray:
    if kernel is None:
        if seed is None:
            raise ValueError("random_conv needs a seed or an explicit kernel")
        kernel = random_filter(seed)
    return strided_correlate(image, kernel, k)


@dataclass(frozen=True, eq=False)
class CompressorSpec:
    method: str
    stride: int
    image_shape: tuple
    seed: int = 0
    filter: np.ndarray | None = None
    projection: PcaProjection | SubsampledProjection | None = None
    extra: dict = field(default_factory=dict)  # e.g. the jointly trained PNN

    @property
    def output_shape(self) -> tuple:
        return output_dims(*self.image_shape, self.stride)

    @property
    def compression(self) -> float:
        return compression_rate(*self.image_shape, self.stride)

    def apply(self, images) -> np.ndarray:
        """Compress one image or a stack; always returns grid-shaped output."""
        images = np.asarray(images, dtype=np.float64)
        if images.shape[-2:] != tuple(self.image_shape):
            raise ValueError(f"images of shape {images.shape[-2:]} given to a compressor for {self.image_shape}")
        lead = images.shape[:-2]
        if self.method == "downsample":
            return downsample(images, self.stride)
        if self.method in ("random-conv", "pnn"):
            return strided_correlate(images, self.filter, self.stride)
        if self.method == "pca":
            return pca_compress(self.projection, images).reshape(*lead, *self.output_shape)
        if self.method == "circulant":
            return compress(self.projection, images).reshape(*lead, *self.output_shape)
        raise ValueError(f"unknown method {self.method!r}")


def make_compressor(method: str, k: int, training_set=None, seed: int = 0, image_shape=None,
                    pnn_config=None, pnn_labels=None, pnn_arch=None) -> CompressorSpec:
    """Fit whatever state ``method`` needs, once.

    ``training_set`` is a stack of ``m x n`` images in [0, 1]; ``pca``,
    ``circulant`` and ``pnn`` require it (``pnn`` also needs ``pnn_labels``).
    ``pnn_arch`` overrides the classifier placed after the zeroth layer.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    _check_stride(k)
    if training_set is not None:
        training_set = np.asarray(training_set, dtype=np.float64)
        image_shape = training_set.shape[1:]
    if image_shape is None:
        raise ValueError(f"{method} needs a training set or an image_shape")
    image_shape = tuple(int(v) for v in image_shape)
    if k > min(image_shape):
        raise ValueError(f"stride {k} exceeds image size {image_shape}")
    needs_data = method in ("pca", "circulant", "pnn")
    if needs_data and (training_set is None or len(training_set) == 0):
        raise ValueError(f"method {method!r} needs a nonempty training set")

    if method == "downsample":
        return CompressorSpec(method, k, image_shape, seed)
    if method == "random-conv":
        return CompressorSpec(method, k, image_shape, seed, filter=random_filter(seed))
    if method == "pca":
        h, w = output_dims(*image_shape, k)
        return CompressorSpec(method, k, image_shape, seed, projection=fit_pca(training_set, h * w))
    if method == "circulant":
        sampler = grid_sampler(*image_shape, k)
        return CompressorSpec(method, k, image_shape, seed, projection=build_projection(training_set, sampler))

    # pnn: joint training of zeroth layer + classifier, then detach the filter
    from .nn import build_architecture, pnn_wrap, split_pnn, train, TrainConfig

    if pnn_labels is None:
        raise ValueError("method 'pnn' needs training labels")
    config = pnn_config or TrainConfig(seed=seed)
    rest = pnn_arch or build_architecture(output_dims(*image_shape, k), dropout=config.dropout)
    spec = pnn_wrap(rest, k, image_shape)
    state = train(spec, training_set, np.asarray(pnn_labels), config)
    kernel, _, rest_spec, rest_params = split_pnn(spec, state.params)
    joint = {"spec": spec, "state": state, "rest_spec": rest_spec, "rest_params": rest_params}
    return CompressorSpec(method, k, image_shape, seed, filter=kernel, extra=joint)
