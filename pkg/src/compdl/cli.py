"""Command-line driver: ``compdl <command> [options]``.

Exit codes: 0 ok, 2 usage error, 3 I/O or file-format error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .benchmark import CSV_FIELDS, STRIDES, SweepConfig, format_row, parse_arch, run_reduced, run_sweep
from .compressors import METHODS, CompressorSpec, compression_rate, make_compressor, output_dims
from .nn import TrainConfig, accuracy, flop_count, train, weight_count

log = logging.getLogger("compdl")

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4
FULL_TRAIN, FULL_EPOCHS = 60000, 10
DESK_TRAIN, DESK_EPOCHS = 6000, 2


class UsageError(Exception):
    pass


def _stride(text):
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"stride must be an integer, got {text!r}") from None
    if k not in STRIDES:
        raise argparse.ArgumentTypeError(f"stride must be in 1..6, got {k}")
    return k


def _csv_list(text, cast=str):
    return tuple(cast(v.strip()) for v in text.split(",") if v.strip())


def _indices(text):
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return _csv_list(text, int)


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


# --------------------------------------------------------------------------
# data helpers
# --------------------------------------------------------------------------

def _load_split(args, split):
    return dataio.load_dataset(args.dataset, split, args.data_dir)


def _train_subset(args, train_ds):
    size = args.train_size or (None if args.full else DESK_TRAIN)
    return train_ds if size is None else train_ds.subset(size, args.seed)


def _epochs(args):
    if args.epochs:
        return args.epochs
    return FULL_EPOCHS if args.full else DESK_EPOCHS


def _save_state(comp: CompressorSpec, path):
    if comp.method == "circulant":
        dataio.save_projection(comp.projection, path)
        return
    payload = {"method": np.array(comp.method), "stride": np.array(comp.stride),
               "image_shape": np.array(comp.image_shape), "seed": np.array(comp.seed)}
    if comp.filter is not None:
        payload["filter"] = comp.filter
    if comp.method == "pca":
        payload["components"] = comp.projection.components
        payload["mean"] = comp.projection.mean
        payload["singular_values"] = comp.projection.singular_values
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def _load_state(path) -> CompressorSpec:
    from .pca import PcaProjection

    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"CPRJ":
        proj = dataio.load_projection(path)
        stride = _grid_stride(proj)
        return CompressorSpec("circulant", stride, (proj.m, proj.n), projection=proj)
    with np.load(path) as z:
        method = str(z["method"])
        shape = tuple(int(v) for v in z["image_shape"])
        proj = None
        if method == "pca":
            proj = PcaProjection(shape[0], shape[1], z["components"], z["mean"], z["singular_values"])
        filt = z["filter"] if "filter" in z else None
        return CompressorSpec(method, int(z["stride"]), shape, int(z["seed"]), filter=filt, projection=proj)


def _grid_stride(proj):
    idx = proj.sampler.indices
    if proj.sampler.grid is None:
        raise dataio.FormatError("projection sampler is not a raster grid")
    return int(idx[1] - idx[0]) if idx.size > 1 else max(proj.m, proj.n)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_build_projection(args) -> int:
    train_ds = _load_split(args, "train")
    subset = _train_subset(args, train_ds)
    config = TrainConfig(epochs=_epochs(args), seed=args.seed)
    comp = make_compressor(args.method, args.stride, subset.images, seed=args.seed,
                           pnn_labels=subset.labels, pnn_config=config)
    h, w = comp.output_shape
    if args.out:
        _save_state(comp, args.out)
    print(f"dims={h}x{w} compression={comp.compression:.2f}")
    return 0


def cmd_compress(args) -> int:
    if args.state:
        comp = _load_state(args.state)
    else:
        if args.method is None or args.stride is None:
            raise UsageError("compress needs --state, or --method and --stride")
        train_ds = _train_subset(args, _load_split(args, "train"))
        config = TrainConfig(epochs=_epochs(args), seed=args.seed)
        comp = make_compressor(args.method, args.stride, train_ds.images, seed=args.seed,
                               pnn_labels=train_ds.labels, pnn_config=config)
    for split, out in (("train", args.out_train), ("test", args.out_test)):
        if out is None:
            continue
        ds = _load_split(args, split)
        if split == "train":
            ds = _train_subset(args, ds)
        dataio.save_compressed_dataset(comp.apply(ds.images), ds.labels, out)
        print(f"{split}: {len(ds)} samples -> {out}")
    return 0


def _write_rows(path, rows):
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        if new:
            writer.writeheader()
        for row in rows:
            writer.writerow(format_row(row))


def cmd_train(args) -> int:
    train_x, train_y = dataio.load_compressed_dataset(args.train)
    test_x, test_y = dataio.load_compressed_dataset(args.test) if args.test else (None, None)
    spec = parse_arch(args.arch, train_x.shape[1:])
    config = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    rows = []
    stride = args.stride if args.stride is not None else 0
    compression = compression_rate(28, 28, stride) if stride else 28 * 28 / (train_x.shape[1] * train_x.shape[2])

    def on_epoch(state, loss):
        acc = accuracy(spec, state.params, test_x, test_y) if test_x is not None else float("nan")
        rows.append({"method": args.method, "stride": stride, "arch": args.arch, "seed": args.seed,
                     "epoch": state.epoch, "train_loss": loss, "test_accuracy": acc,
                     "weights": weight_count(spec), "mflops": flop_count(spec) / 1e6, "compression": compression})
        log.info("epoch %d loss %.4f acc %.4f", state.epoch, loss, acc)

    state = None
    if args.resume:
        spec, state, _ = dataio.load_checkpoint(args.resume)
    state = train(spec, train_x, train_y, config, state=state, on_epoch=on_epoch)
    if args.out:
        dataio.save_checkpoint(spec, state, args.out, extra={"method": args.method, "stride": stride})
    if args.csv:
        _write_rows(args.csv, rows)
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(format_row(row))
    return 0


def cmd_eval(args) -> int:
    spec, state, _ = dataio.load_checkpoint(args.checkpoint)
    x, y = dataio.load_compressed_dataset(args.test)
    print(f"test_accuracy={accuracy(spec, state.params, x, y):.4f}")
    return 0


def _sweep_config(args, methods_default=METHODS, strides_default=STRIDES) -> SweepConfig:
    return SweepConfig(
        methods=args.methods or methods_default,
        strides=args.strides or strides_default,
        dataset=args.dataset,
        seed=args.seed,
        epochs=_epochs(args),
        out_dir=args.out,
        workers=args.workers,
    )


def _prepare_data(args):
    train_ds = _train_subset(args, _load_split(args, "train"))
    test_ds = _load_split(args, "test")
    if args.test_size:
        test_ds = test_ds.subset(args.test_size, args.seed)
    return train_ds, test_ds


def _print_row(row):
    r = format_row(row)
    print(f"{r['method']:>12} stride={r['stride']} arch={r['arch']} acc={r['test_accuracy']} "
          f"loss={r['train_loss']} weights={r['weights']} mflops={r['mflops']}", flush=True)


def cmd_sweep(args) -> int:
    config = _sweep_config(args)
    train_ds, test_ds = _prepare_data(args)
    path = run_sweep(config, train_ds.images, train_ds.labels, test_ds.images, test_ds.labels, on_row=_print_row)
    print(f"results: {path}")
    return 0


def cmd_reduced(args) -> int:
    config = _sweep_config(args, methods_default=("pnn", "circulant"), strides_default=(6,))
    train_ds, test_ds = _prepare_data(args)
    path = run_reduced(config, args.indices, train_ds.images, train_ds.labels, test_ds.images, test_ds.labels,
                       on_row=_print_row)
    print(f"results: {path}")
    return 0


def cmd_table(args) -> int:
    """Print stride, dims, compression, weights and MFLOPs for every stride."""
    from .nn import build_architecture

    print("stride,dims,compression,weights,mflops")
    for k in STRIDES:
        h, w = output_dims(28, 28, k)
        spec = build_architecture((h, w))
        print(f"{k},{h}x{w},{compression_rate(28, 28, k):.2f},{weight_count(spec)},{flop_count(spec) / 1e6:.2f}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _common(p, data=True):
    p.add_argument("--seed", type=int, default=0)
    if data:
        p.add_argument("--dataset", choices=("mnist", "fashion-mnist"), default="mnist")
        p.add_argument("--data-dir", default=None, help="directory with IDX files (default: $COMPDL_DATA_DIR)")
        p.add_argument("--train-size", type=int, default=None, help=f"training subset size (default {DESK_TRAIN})")
        p.add_argument("--full", action="store_true", help="60k training images, 10 epochs")
        p.add_argument("--epochs", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compdl", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file with default option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-projection", help="fit a compressor and report its output size")
    _common(p)
    p.add_argument("--stride", type=_stride, required=True)
    p.add_argument("--method", choices=METHODS, default="circulant")
    p.add_argument("--out", help="CPRJ file (circulant) or .npz state (other methods)")
    p.set_defaults(func=cmd_build_projection)

    p = sub.add_parser("compress", help="write compressed train/test sets")
    _common(p)
    p.add_argument("--state", help="file written by build-projection")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--stride", type=_stride)
    p.add_argument("--out-train")
    p.add_argument("--out-test")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("train", help="train a classifier on a compressed dataset")
    _common(p, data=False)
    p.add_argument("--train", required=True, help="CCDS training file")
    p.add_argument("--test", help="CCDS test file")
    p.add_argument("--arch", default="auto", help="auto or reduced:<1..5>")
    p.add_argument("--epochs", type=int, default=FULL_EPOCHS)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--method", default="custom", help="label written to the CSV")
    p.add_argument("--stride", type=_stride, default=None)
    p.add_argument("--out", help="checkpoint (CCKP) path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--csv", help="append per-epoch rows here (default: stdout)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="test accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_eval)

    for name, func, help_text in (("sweep", cmd_sweep, "method x stride sweep"),
                                  ("reduced", cmd_reduced, "reduced-filter networks at stride 6")):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        p.add_argument("--methods", type=_csv_list, default=None)
        if name == "sweep":
            p.add_argument("--strides", type=lambda t: tuple(_stride(v) for v in _csv_list(t)), default=None)
        else:
            p.set_defaults(strides=None)
            p.add_argument("--indices", type=_indices, default=(1, 2, 3, 4, 5))
        p.add_argument("--test-size", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default="results")
        p.set_defaults(func=func)

    p = sub.add_parser("table", help="print stride/compression/size bookkeeping")
    p.set_defaults(func=cmd_table)
    return parser


def _apply_config(parser, argv):
    """Re-parse with config-file values as defaults, so flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    values = read_config_file(known.config)
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in rest if a in choices), None)
    if command is None:
        return parser.parse_args(argv)
    sub = choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"{known.config}: unknown option {key!r} for {command}")
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{known.config}: {key}: {exc}") from None
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"compdl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"compdl: error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"compdl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"compdl: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, dataio.FormatError) as exc:
        print(f"compdl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"compdl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
