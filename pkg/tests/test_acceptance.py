"""One test per acceptance criterion, each printing a PASS/FAIL line."""
import io
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from compdl.bccb import bccb_from_column, from_spectrum, materialize, nearest_unitary_bccb
from compdl.benchmark import run_cell
from compdl.cli import main
from compdl.compressors import compression_rate, output_dims, strided_correlate
from compdl.dataio import write_idx
from compdl.nn import (Conv, Dense, Dropout, MaxPool, NetworkSpec, ReLU, Softmax, TrainConfig,
                       build_architecture, build_reduced_architecture, flop_count, init_params, logits,
                       loss_and_grads, pnn_wrap, split_pnn, train, weight_count)
from compdl.subsample import DownsamplingOperator, grid_sampler, projection_from_rows, subsample_rows, zero_pad
from conftest import record
from oracles import (finite_difference_grads, max_relative_error, naive_bccb, naive_dft2, torus_grid_search,
                     unitary_from_phases)

STRIDE_DIMS = [(1, "28x28", "1.00"), (2, "14x14", "4.00"), (3, "10x10", "7.84"),
          (4, "7x7", "16.00"), (5, "6x6", "21.78"), (6, "5x5", "31.36")]
FULL_WEIGHTS = [857_738, 857_738, 464_522, 857_738, 644_746, 464_522]
FULL_MFLOPS = ["22.93", "6.94", "3.54", "6.70", "4.92", "3.42"]
REDUCED_WEIGHTS = [464_522, 220_874, 108_650, 54_938, 28_682]
REDUCED_MFLOPS = ["3.42", "1.07", "0.37", "0.15", "0.06"]


def _stride_networks():
    return [build_architecture(output_dims(28, 28, k)) for k in range(1, 7)]


def test_criterion_01_weight_counts():
    t0 = time.perf_counter()
    got2 = [weight_count(s) for s in _stride_networks()]
    got3 = [weight_count(build_reduced_architecture(i)) for i in range(1, 6)]
    elapsed = time.perf_counter() - t0
    ok = got2 == FULL_WEIGHTS and got3 == REDUCED_WEIGHTS and elapsed < 1
    record(1, "weight counts match the published counts exactly", ok, f"{got2} {got3}, {elapsed:.3f}s")
    assert ok


def test_criterion_02_flop_counts():
    t0 = time.perf_counter()
    got2 = [f"{flop_count(s) / 1e6:.2f}" for s in _stride_networks()]
    got3 = [f"{flop_count(build_reduced_architecture(i)) / 1e6:.2f}" for i in range(1, 6)]
    elapsed = time.perf_counter() - t0
    ok = got2 == FULL_MFLOPS and got3 == REDUCED_MFLOPS and elapsed < 1
    record(2, "MFLOPs match the published values to two decimals", ok, f"{got2} {got3}, {elapsed:.3f}s")
    assert ok


def test_criterion_03_compression_table():
    t0 = time.perf_counter()
    got = []
    for k in range(1, 7):
        h, w = output_dims(28, 28, k)
        s = grid_sampler(28, 28, k).s
        got.append((k, f"{h}x{w}", f"{compression_rate(28, 28, k):.2f}"))
        assert s == h * w
    elapsed = time.perf_counter() - t0
    ok = got == STRIDE_DIMS and elapsed < 1
    record(3, "stride -> dims -> compression bookkeeping", ok, f"{elapsed:.3f}s")
    assert ok


SHAPES = [(2, 2), (1, 4), (2, 3), (1, 6), (3, 3), (1, 9)]


def test_criterion_04_nearest_bccb_beats_torus_grid():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst_margin = -np.inf
    for trial in range(20):
        m, n = SHAPES[trial % len(SHAPES)]
        f = naive_dft2(m, n)
        w = rng.normal(size=(m * n, m * n))
        ours = np.linalg.norm(w - materialize(nearest_unitary_bccb(w, m, n)))
        best, _ = torus_grid_search(lambda ph: np.linalg.norm(w - unitary_from_phases(ph, m, n, f)),
                                    m * n, 48, starts=2, rng=rng)
        worst_margin = max(worst_margin, ours - best)
    elapsed = time.perf_counter() - t0
    ok = worst_margin <= 0.05 and elapsed < 120
    record(4, "nearest unitary BCCB <= best 48-point torus grid candidate + 0.05", ok,
           f"max(ours - grid) = {worst_margin:.3e}, {elapsed:.1f}s")
    assert ok


def test_criterion_05_realness_and_unitarity():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst_imag = worst_unit = 0.0
    for _ in range(100):
        m, n = (int(v) for v in rng.integers(1, 9, size=2))
        w = rng.normal(size=(m * n, m * n))
        b = nearest_unitary_bccb(w, m, n)
        # dense route through the independent DFT matrix, imaginary part kept
        f = naive_dft2(m, n)
        full = f @ np.diag(b.spectrum) @ f.conj().T
        worst_imag = max(worst_imag, float(np.max(np.abs(full.imag))))
        c = materialize(b)
        worst_unit = max(worst_unit, float(np.linalg.norm(c @ c.conj().T - np.eye(m * n))))
    elapsed = time.perf_counter() - t0
    ok = worst_imag < 1e-9 and worst_unit < 1e-10 and elapsed < 30
    record(5, "materialized optimum is real and unitary", ok,
           f"max|Im| = {worst_imag:.2e}, max||CC*-I|| = {worst_unit:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_06_dft_diagonalizes_bccb():
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    worst_row = worst_col = 0.0
    for m in range(1, 9):
        for n in range(1, 9):
            col = rng.normal(size=m * n) + 1j * rng.normal(size=m * n)
            c = bccb_from_column(col, m, n)
            assert np.array_equal(c, naive_bccb(col, m, n))
            f = naive_dft2(m, n)
            d = f.conj().T @ c @ f
            root = np.sqrt(m * n)
            # generating vector = first row (the form with diag(F c))
            worst_row = max(worst_row, float(np.linalg.norm(d - root * np.diag(f @ c[0]))))
            # same statement phrased through the first column
            worst_col = max(worst_col, float(np.linalg.norm(d - root * np.diag(f.conj().T @ col))))
    elapsed = time.perf_counter() - t0
    ok = worst_row < 1e-9 and worst_col < 1e-9 and elapsed < 10
    record(6, "F*CF = sqrt(mn) diag(F r) (first row r), up to 8x8 blocks", ok,
           f"row form {worst_row:.2e}, column form {worst_col:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_07_zero_padding_identity_and_reduction():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        m, n = (int(v) for v in rng.integers(1, 7, size=2))
        mn = m * n
        s = int(rng.integers(1, mn + 1))
        sampler = DownsamplingOperator(mn, rng.choice(mn, size=s, replace=False))
        w = rng.normal(size=(s, mn))
        c = materialize(from_spectrum(np.exp(1j * rng.uniform(0, 2 * np.pi, mn)), m, n))
        gap = (np.linalg.norm(zero_pad(w, sampler) - c) ** 2 - np.linalg.norm(w - subsample_rows(c, sampler)) ** 2)
        worst = max(worst, abs(gap - (mn - s)))
    worst_margin = -np.inf
    for m, n, s in [(1, 2, 1), (1, 3, 2), (2, 2, 2), (1, 4, 3), (2, 3, 2), (1, 6, 4), (3, 3, 3), (3, 3, 5)]:
        mn = m * n
        sampler = DownsamplingOperator(mn, rng.choice(mn, size=s, replace=False))
        w = rng.normal(size=(s, mn))
        f = naive_dft2(m, n)
        ours = np.linalg.norm(w - projection_from_rows(w, sampler, m, n).rows)
        best, _ = torus_grid_search(
            lambda ph: np.linalg.norm(w - unitary_from_phases(ph, m, n, f)[sampler.indices]), mn, 48,
            starts=2, rng=rng)
        worst_margin = max(worst_margin, ours - best)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and worst_margin <= 0.05 and elapsed < 120
    record(7, "zero-padding identity (mn - s) and subsampled optimum vs grid search", ok,
           f"identity err {worst:.2e}, max(ours - grid) = {worst_margin:.3e}, {elapsed:.1f}s")
    assert ok


GRAD_NETS = [
    NetworkSpec((1, 1, 2), (Softmax(2),)),
    NetworkSpec((6, 6, 2), (Conv(3, 3, 1), ReLU(), MaxPool(2), Conv(2, 3, 2, bias=False), ReLU(),
                            Dense(5), ReLU(), Dropout(0.3), Softmax(4))),
    NetworkSpec((7, 7, 1), (Conv(1, 5, 3, bias=False), Conv(3, 5, 1), ReLU(), MaxPool(2), Dense(4), Softmax(3))),
]


def test_criterion_08_gradients():
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    worst = 0.0
    for spec in GRAD_NETS:
        params = init_params(spec, rng, std=0.5)
        x = rng.normal(size=(4, *spec.input_shape))
        y = rng.integers(0, spec.layers[-1].classes, size=4)
        for train_mode in (False, True):
            seed = 99 if train_mode else None

            def loss(p):
                r = np.random.default_rng(seed) if train_mode else None
                return loss_and_grads(spec, p, x, y, train=train_mode, rng=r)[0]

            r = np.random.default_rng(seed) if train_mode else None
            _, analytic = loss_and_grads(spec, params, x, y, train=train_mode, rng=r)
            worst = max(worst, max_relative_error(analytic, finite_difference_grads(loss, params)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    record(8, "conv/relu/maxpool/dense/dropout/softmax gradients vs central differences", ok,
           f"max relative error {worst:.2e}, {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_09_desk_benchmark(mnist):
    train_ds, test_ds = mnist
    sub = train_ds.subset(6000, seed=0)
    t0 = time.perf_counter()
    acc = {}
    for method, stride in [("circulant", 6), ("downsample", 6), ("random-conv", 6), ("downsample", 1)]:
        row = run_cell(method, stride, sub.images, sub.labels, test_ds.images, test_ds.labels, seed=0, epochs=2)
        acc[(method, stride)] = row["test_accuracy"]
        print(method, stride, row["test_accuracy"])
    elapsed = time.perf_counter() - t0
    circ = acc[("circulant", 6)]
    margin = circ - max(acc[("downsample", 6)], acc[("random-conv", 6)])
    raw = acc[("downsample", 1)]
    ok = margin >= 0.02 and raw >= 0.95 and elapsed < 900
    record(9, "desk MNIST: circulant beats downsample and random-conv by >= 2 points at stride 6, raw >= 95%",
           ok, f"circulant {circ:.4f}, downsample {acc[('downsample', 6)]:.4f}, "
               f"random-conv {acc[('random-conv', 6)]:.4f}, raw {raw:.4f}, {elapsed:.0f}s")
    assert ok


def test_criterion_10_pnn_round_trip():
    rng = np.random.default_rng(10)
    t0 = time.perf_counter()
    spec = pnn_wrap(build_architecture((5, 5)), 6)
    images = rng.random((64, 28, 28))
    state = train(spec, images, rng.integers(0, 10, 64), TrainConfig(epochs=1, seed=10))
    probe = rng.random((10, 28, 28))
    kernel, stride, rest, rest_params = split_pnn(spec, state.params)
    diff = float(np.max(np.abs(logits(spec, state.params, probe)
                              - logits(rest, rest_params, strided_correlate(probe, kernel, stride)))))
    elapsed = time.perf_counter() - t0
    ok = diff < 1e-6 and kernel.shape == (5, 5) and elapsed < 60
    record(10, "detached PNN filter + remaining network reproduces joint logits", ok,
           f"max logit diff {diff:.2e}, {elapsed:.1f}s")
    assert ok


def _cli(*argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main([str(a) for a in argv])
    return code, buf.getvalue()


def test_criterion_11_determinism(tmp_path):
    root = tmp_path / "data" / "mnist"
    root.mkdir(parents=True)
    r = np.random.default_rng(11)
    for prefix, count in (("train", 120), ("t10k", 50)):
        labels = r.integers(0, 10, size=count).astype(np.uint8)
        images = (r.random((count, 28, 28)) * 255).astype(np.uint8)
        write_idx(root / f"{prefix}-images-idx3-ubyte", images)
        write_idx(root / f"{prefix}-labels-idx1-ubyte", labels)
    common = ("--data-dir", tmp_path / "data", "--seed", 3)
    outputs = {}
    for run in ("a", "b"):
        out = tmp_path / run
        out.mkdir()
        workers = 1 if run == "a" else 2
        assert _cli("sweep", *common, "--train-size", 100, "--test-size", 50, "--epochs", 1, "--strides", "6",
                    "--workers", workers, "--out", out)[0] == 0
        assert _cli("build-projection", *common, "--stride", 4, "--out", out / "p.cprj")[0] == 0
        assert _cli("compress", *common, "--state", out / "p.cprj", "--out-train", out / "tr.ccds",
                    "--out-test", out / "te.ccds")[0] == 0
        assert _cli("train", "--train", out / "tr.ccds", "--test", out / "te.ccds", "--epochs", 2, "--seed", 3,
                    "--csv", out / "train.csv", "--out", out / "c.cckp")[0] == 0
        code, table = _cli("table")
        outputs[run] = [(out / name).read_bytes() for name in
                        ("results.csv", "p.cprj", "tr.ccds", "train.csv", "c.cckp")] + [table.encode()]
    ok = outputs["a"] == outputs["b"]
    record(11, "repeated commands with the same seed give bit-identical CSV and state files", ok,
           "sweep (serial vs 2 workers), build-projection, compress, train, table")
    assert ok
