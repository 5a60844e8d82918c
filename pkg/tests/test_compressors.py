import numpy as np
import pytest

from compdl.compressors import (METHODS, compression_rate, downsample, make_compressor, output_dims,
                                random_conv, random_filter, strided_correlate)
from compdl.nn import TrainConfig, build_architecture, logits, strip_zeroth
from compdl.subsample import compress
from oracles import naive_correlate_same

STRIDE_DIMS = {1: ((28, 28), 1.00), 2: ((14, 14), 4.00), 3: ((10, 10), 7.84),
          4: ((7, 7), 16.00), 5: ((6, 6), 21.78), 6: ((5, 5), 31.36)}


@pytest.fixture(scope="module")
def digits():
    r = np.random.default_rng(7)
    images = r.random((64, 28, 28))
    labels = r.integers(0, 10, size=64)
    return images, labels


@pytest.mark.parametrize("k", sorted(STRIDE_DIMS))
def test_stride_dims(k):
    dims, rate = STRIDE_DIMS[k]
    assert output_dims(28, 28, k) == dims
    assert round(compression_rate(28, 28, k), 2) == rate


def test_downsample(rng):
    img = rng.random((28, 28))
    np.testing.assert_array_equal(downsample(img, 1), img)
    out = downsample(img, 4)
    assert out.shape == (7, 7)
    assert out[2, 3] == img[8, 12]
    np.testing.assert_array_equal(downsample(np.full((9, 9), 3.0), 2), np.full((5, 5), 3.0))
    with pytest.raises(ValueError):
        downsample(img, 0)


def test_strided_correlation_matches_loops(rng):
    img = rng.normal(size=(11, 9))
    ker = rng.normal(size=(5, 5))
    for k in (1, 2, 3):
        np.testing.assert_allclose(strided_correlate(img, ker, k), naive_correlate_same(img, ker, k), atol=1e-12)


def test_delta_kernel_is_downsampling(rng):
    img = rng.random((28, 28))
    delta = np.zeros((5, 5))
    delta[2, 2] = 1.0
    for k in range(1, 7):
        np.testing.assert_array_equal(random_conv(img, k, kernel=delta), downsample(img, k))


def test_random_conv_seeded(rng):
    img = rng.random((28, 28))
    a = random_conv(img, 5, seed=3)
    assert a.shape == (6, 6)
    np.testing.assert_array_equal(a, random_conv(img, 5, seed=3))
    assert not np.array_equal(a, random_conv(img, 5, seed=4))
    np.testing.assert_array_equal(random_filter(3), np.random.default_rng(3).standard_normal((5, 5)))
    with pytest.raises(ValueError):
        random_conv(img, 5)


def test_all_methods_stride_dims(digits):
    images, labels = digits
    cfg = TrainConfig(epochs=1, seed=1)
    for k in (2, 6):
        for method in METHODS:
            comp = make_compressor(method, k, images, seed=1, pnn_labels=labels, pnn_config=cfg)
            assert comp.apply(images[:3]).shape == (3, *STRIDE_DIMS[k][0])
            assert comp.apply(images[0]).shape == STRIDE_DIMS[k][0]


def test_circulant_compressor(digits):
    images, _ = digits
    comp = make_compressor("circulant", 3, images)
    p = comp.projection
    assert p.s == 100
    np.testing.assert_allclose(p.rows @ p.rows.T, np.eye(100), atol=1e-8)
    np.testing.assert_array_equal(comp.apply(images[:4]).reshape(4, -1), compress(p, images[:4]))


def test_pca_full_basis_is_isometric(digits):
    images, _ = digits
    comp = make_compressor("pca", 1, images)
    assert comp.projection.s == 784 and comp.compression == 1.0
    x = images[5]
    assert np.linalg.norm(comp.apply(x)) == pytest.approx(np.linalg.norm(x), abs=1e-8)


def test_linearity(digits, rng):
    images, labels = digits
    x, y = rng.normal(size=(2, 28, 28))
    a, b = 0.7, -1.9
    for method in ("random-conv", "pnn", "circulant", "downsample", "pca"):
        comp = make_compressor(method, 4, images, seed=2, pnn_labels=labels,
                               pnn_config=TrainConfig(epochs=1, seed=2))
        lhs = comp.apply(a * x + b * y)
        rhs = a * comp.apply(x) + b * comp.apply(y)
        assert np.max(np.abs(lhs - rhs)) < 1e-6


def test_pnn_detached_filter(digits):
    images, labels = digits
    comp = make_compressor("pnn", 6, images, seed=0, pnn_labels=labels, pnn_config=TrainConfig(epochs=1))
    assert comp.filter.shape == (5, 5)
    joint = comp.extra
    np.testing.assert_array_equal(comp.filter, joint["state"].params["0.kernel"][:, :, 0, 0])
    assert strip_zeroth(joint["spec"]) == build_architecture((5, 5))
    direct = logits(joint["spec"], joint["state"].params, images[:10])
    split = logits(joint["rest_spec"], joint["rest_params"], comp.apply(images[:10]))
    assert np.max(np.abs(direct - split)) < 1e-6


def test_make_compressor_errors(digits):
    images, labels = digits
    with pytest.raises(ValueError):
        make_compressor("jpeg", 2, images)
    with pytest.raises(ValueError):
        make_compressor("pca", 2)
    with pytest.raises(ValueError):
        make_compressor("pnn", 2, images)
    with pytest.raises(ValueError):
        make_compressor("downsample", 0, image_shape=(28, 28))
    with pytest.raises(ValueError):
        make_compressor("downsample", 2)
    assert make_compressor("downsample", 2, image_shape=(28, 28)).output_shape == (14, 14)
