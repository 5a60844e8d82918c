"""Method x stride experiment cells, sweeps with resume, CSV and SVG output."""
from __future__ import annotations

import csv
import hashlib
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compressors import METHODS, make_compressor
from .nn import (
    TrainConfig,
    accuracy,
    build_architecture,
    build_reduced_architecture,
    flop_count,
    train,
    weight_count,
)

__all__ = [
    "CSV_FIELDS",
    "SweepConfig",
    "cell_seed",
    "run_cell",
    "format_row",
    "read_results",
    "run_sweep",
    "run_reduced",
    "parse_arch",
    "render_svg",
]

CSV_FIELDS = ("method", "stride", "arch", "seed", "epoch", "train_loss", "test_accuracy", "weights", "mflops", "compression")
STRIDES = (1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class SweepConfig:
    methods: tuple = METHODS
    strides: tuple = STRIDES
    dataset: str = "mnist"
    seed: int = 0
    epochs: int = 2
    train_size: int | None = 6000
    test_size: int | None = None
    out_dir: str = "results"
    workers: int = 1
    lr: float = 0.01
    batch_size: int = 32
    dropout: float = 0.4

    def __post_init__(self):
        if not self.methods or not self.strides:
            raise ValueError("a sweep needs at least one method and one stride")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
        if any(s not in STRIDES for s in self.strides):
            raise ValueError(f"strides must lie in 1..6, got {self.strides}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def cell_seed(seed: int, method: str, stride: int) -> int:
    """Stable per-cell seed (independent of execution order or process)."""
    digest = hashlib.sha256(f"{seed}|{method}|{stride}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def parse_arch(arch: str, input_dims, dropout: float = 0.4):
    if arch in ("auto", None):
        return build_architecture(input_dims, dropout=dropout)
    if arch.startswith("reduced:"):
        spec = build_reduced_architecture(int(arch.split(":", 1)[1]), dropout=dropout)
        if spec.input_shape[:2] != tuple(input_dims):
            raise ValueError(f"{arch} expects 5x5 inputs, data is {input_dims[0]}x{input_dims[1]}")
        return spec
    raise ValueError(f"unknown architecture {arch!r}; use 'auto' or 'reduced:<1..5>'")


def run_cell(method: str, stride: int, train_images, train_labels, test_images, test_labels,
             seed: int, epochs: int, arch: str = "auto", lr: float = 0.01, batch_size: int = 32,
             dropout: float = 0.4) -> dict:
    """Build the compressor, train a classifier on compressed data, evaluate it.

    For ``pnn`` the classifier is the one trained jointly with the zeroth
    layer, evaluated on data compressed by the detached filter.
    """
    cseed = cell_seed(seed, method, stride)
    config = TrainConfig(lr=lr, dropout=dropout, epochs=epochs, batch_size=batch_size, seed=cseed)
    h, w = -(-train_images.shape[1] // stride), -(-train_images.shape[2] // stride)
    spec = parse_arch(arch, (h, w), dropout)
    comp = make_compressor(method, stride, train_images, seed=cseed, pnn_labels=train_labels,
                           pnn_config=config, pnn_arch=spec)
    test_x = comp.apply(test_images)
    if method == "pnn":
        state = comp.extra["state"]
        params = comp.extra["rest_params"]
        spec = comp.extra["rest_spec"]
    else:
        state = train(spec, comp.apply(train_images), train_labels, config)
        params = state.params
    return {
        "method": method,
        "stride": stride,
        "arch": arch,
        "seed": seed,
        "epoch": state.epoch,
        "train_loss": state.history[-1],
        "test_accuracy": accuracy(spec, params, test_x, test_labels),
        "weights": weight_count(spec),
        "mflops": flop_count(spec) / 1e6,
        "compression": comp.compression,
    }


def format_row(row: dict) -> dict:
    """Locale-independent fixed-precision text for every CSV field."""
    return {
        "method": row["method"],
        "stride": str(int(row["stride"])),
        "arch": row["arch"],
        "seed": str(int(row["seed"])),
        "epoch": str(int(row["epoch"])),
        "train_loss": f"{float(row['train_loss']):.6f}",
        "test_accuracy": f"{float(row['test_accuracy']):.4f}",
        "weights": str(int(row["weights"])),
        "mflops": f"{float(row['mflops']):.2f}",
        "compression": f"{float(row['compression']):.2f}",
    }


def read_results(path) -> list:
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"{path} has header {reader.fieldnames}, expected {list(CSV_FIELDS)}")
        return list(reader)


def _append_row(path: Path, row: dict) -> None:
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerow(format_row(row))
        fh.flush()
        os.fsync(fh.fileno())


# worker-process globals, set once by the pool initializer
_DATA = None


def _init_worker(data):
    global _DATA
    _DATA = data


def _run_task(task):
    method, stride, arch, kw = task
    tr_x, tr_y, te_x, te_y = _DATA
    return run_cell(method, stride, tr_x, tr_y, te_x, te_y, arch=arch, **kw)


def _execute(tasks, data, workers, out_csv, on_row=None):
    out_csv = Path(out_csv)
    if workers <= 1:
        _init_worker(data)
        results = map(_run_task, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(data,))
        results = pool.map(_run_task, tasks)  # yields in submission order
    rows = []
    try:
        for row in results:
            _append_row(out_csv, row)
            rows.append(row)
            if on_row is not None:
                on_row(row)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return rows


def run_sweep(config: SweepConfig, train_images, train_labels, test_images, test_labels, on_row=None,
              svg: bool = True) -> Path:
    """Run every (method, stride) cell not already present in ``results.csv``."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    done = {(r["method"], int(r["stride"])) for r in read_results(csv_path)}
    kw = dict(seed=config.seed, epochs=config.epochs, lr=config.lr, batch_size=config.batch_size,
              dropout=config.dropout)
    tasks = [(m, s, "auto", kw) for m in config.methods for s in config.strides if (m, s) not in done]
    data = (train_images, train_labels, test_images, test_labels)
    _execute(tasks, data, config.workers, csv_path, on_row)
    if svg:
        rows = read_results(csv_path)
        (out / "accuracy_vs_compression.svg").write_text(
            render_svg(rows, x="compression", title=f"{config.dataset}: accuracy vs compression"))
    return csv_path


def run_reduced(config: SweepConfig, indices, train_images, train_labels, test_images, test_labels,
                stride: int = 6, on_row=None, svg: bool = True) -> Path:
    """Reduced-filter networks on stride-``stride`` data, one row per (method, index)."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "reduced.csv"
    done = {(r["method"], r["arch"]) for r in read_results(csv_path)}
    kw = dict(seed=config.seed, epochs=config.epochs, lr=config.lr, batch_size=config.batch_size,
              dropout=config.dropout)
    tasks = [(m, stride, f"reduced:{i}", kw) for m in config.methods for i in indices
             if (m, f"reduced:{i}") not in done]
    _execute(tasks, (train_images, train_labels, test_images, test_labels), config.workers, csv_path, on_row)
    if svg:
        rows = read_results(csv_path)
        (out / "accuracy_vs_filters.svg").write_text(
            render_svg(rows, x="arch", title=f"{config.dataset}: accuracy vs network size (stride {stride})"))
    return csv_path


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------

_COLORS = {
    "downsample": "#1f77b4",
    "random-conv": "#ff7f0e",
    "pca": "#2ca02c",
    "circulant": "#d62728",
    "pnn": "#9467bd",
}


def _xvalue(row, x):
    if x == "arch":
        arch = row["arch"]
        return float(arch.split(":", 1)[1]) if ":" in arch else 1.0
    return float(row[x])


def render_svg(rows, x: str = "compression", title: str = "", width: int = 640, height: int = 420) -> str:
    """Static line chart of test accuracy, one polyline per method."""
    left, right, top, bottom = 64, 150, 40, 52
    pw, ph = width - left - right, height - top - bottom
    series = {}
    for row in rows:
        series.setdefault(row["method"], []).append((_xvalue(row, x), float(row["test_accuracy"])))
    xs = [p[0] for pts in series.values() for p in pts] or [0.0, 1.0]
    ys = [p[1] for pts in series.values() for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    y0 = max(0.0, np.floor(min(ys) * 10) / 10)
    y1 = 1.0

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
              f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">\n')
    out.write(f'<rect width="{width}" height="{height}" fill="white"/>\n')
    out.write(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>\n')
    out.write(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>\n')
    out.write(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>\n')
    for v in sorted(set(xs)):
        out.write(f'<line x1="{sx(v):.1f}" y1="{top + ph}" x2="{sx(v):.1f}" y2="{top + ph + 5}" stroke="black"/>\n')
        label = f"{v:.2f}" if x == "compression" else f"{v:g}"
        out.write(f'<text x="{sx(v):.1f}" y="{top + ph + 18}" text-anchor="middle">{label}</text>\n')
    steps = int(round((y1 - y0) / 0.1))
    for i in range(steps + 1):
        v = y0 + i * 0.1
        out.write(f'<line x1="{left - 5}" y1="{sy(v):.1f}" x2="{left + pw}" y2="{sy(v):.1f}" stroke="#ddd"/>\n')
        out.write(f'<text x="{left - 8}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.1f}</text>\n')
    xlabel = "compression rate" if x == "compression" else "reduced network index"
    out.write(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{xlabel}</text>\n')
    out.write(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
              f'transform="rotate(-90 16 {top + ph / 2:.1f})">test accuracy</text>\n')
    for k, method in enumerate(m for m in METHODS if m in series):
        pts = sorted(series[method])
        color = _COLORS.get(method, "black")
        coords = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in pts)
        out.write(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>\n')
        for a, b in pts:
            out.write(f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="3" fill="{color}"/>\n')
        ly = top + 10 + 18 * k
        out.write(f'<line x1="{left + pw + 14}" y1="{ly}" x2="{left + pw + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>\n')
        out.write(f'<text x="{left + pw + 42}" y="{ly + 4}">{_esc(method)}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
