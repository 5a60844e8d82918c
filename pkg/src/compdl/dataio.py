"""IDX dataset loading and binary persistence formats.

Formats (all little-endian except IDX, which is big-endian by definition):

``CPRJ`` projection
    magic ``b"CPRJ"``, version u16, m u32, n u32, s u32,
    ``m*n`` complex128 spectrum values, ``s`` u64 sampler indices,
    CRC-32 (u32) of everything before it.

``CCDS`` compressed dataset
    magic ``b"CCDS"``, version u16, count u32, height u32, width u32,
    ``count*height*width`` float64 features, ``count`` u8 labels, CRC-32.

``CCKP`` checkpoint
    magic ``b"CCKP"``, version u16, metadata length u32, UTF-8 JSON metadata,
    array count u32, then per array: name length u16, name, ndim u8,
    ndim x u32 dims, float64 data; CRC-32.
"""
from __future__ import annotations

import gzip
import io
import json
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bccb import from_spectrum
from .nn.architectures import spec_from_dict, spec_to_dict
from .nn.optim import AdamState
from .nn.training import TrainState
from .subsample import DownsamplingOperator, SubsampledProjection, _make

__all__ = [
    "FormatError",
    "BadMagicError",
    "TruncatedFileError",
    "CountMismatchError",
    "VersionMismatchError",
    "ChecksumError",
    "LabeledDataset",
    "read_idx",
    "write_idx",
    "load_idx",
    "find_dataset_files",
    "load_dataset",
    "save_projection",
    "load_projection",
    "save_compressed_dataset",
    "load_compressed_dataset",
    "save_checkpoint",
    "load_checkpoint",
    "MAX_DECLARED_COUNT",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MAX_DECLARED_COUNT = 10**7
FORMAT_VERSION = 1


class FormatError(ValueError):
    """A file does not follow its declared format."""


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class CountMismatchError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    images: np.ndarray  # (N, m, n), values in [0, 1]
    labels: np.ndarray  # (N,), ints 0..9
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatchError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() > 9):
            raise ValueError("labels must be class ids 0..9")

    def __len__(self):
        return len(self.labels)

    def subset(self, size: int, seed: int) -> "LabeledDataset":
        """Seeded sample of ``size`` items without replacement, original order kept."""
        if size >= len(self):
            return self
        idx = np.sort(np.random.default_rng(seed).choice(len(self), size, replace=False))
        return LabeledDataset(self.images[idx], self.labels[idx], self.split)


# --------------------------------------------------------------------------
# IDX
# --------------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    """Parse an (optionally gzipped) unsigned-byte IDX file into a uint8 array."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if expected_magic is not None and magic != expected_magic:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if magic >> 8 != 0x08:
        raise BadMagicError(f"{path}: magic 0x{magic:08x} is not an unsigned-byte IDX file")
    ndim = magic & 0xFF
    if ndim < 1 or len(raw) < 4 + 4 * ndim:
        raise TruncatedFileError(f"{path}: header declares {ndim} dims but file is {len(raw)} bytes")
    dims = struct.unpack(f">{ndim}I", raw[4 : 4 + 4 * ndim])
    if dims[0] > MAX_DECLARED_COUNT:
        raise FormatError(f"{path}: declared count {dims[0]} exceeds the limit {MAX_DECLARED_COUNT}")
    total = int(np.prod(dims, dtype=np.int64))
    body = raw[4 + 4 * ndim :]
    if len(body) < total:
        raise TruncatedFileError(f"{path}: header declares {total} bytes of data, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=total).reshape(dims)


def write_idx(path, array) -> None:
    a = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | a.ndim) + struct.pack(f">{a.ndim}I", *a.shape)
    data = header + a.tobytes()
    if str(path).endswith(".gz"):
        data = gzip.compress(data)
    with open(path, "wb") as fh:
        fh.write(data)


def load_idx(images_path, labels_path, split: str = "train") -> LabeledDataset:
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images in {images_path} but {labels.shape[0]} labels in {labels_path}")
    return LabeledDataset(images.astype(np.float64) / 255.0, labels.astype(np.int64), split)


_IDX_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _default_roots():
    env = os.environ.get("COMPDL_DATA_DIR")
    roots = [Path(env)] if env else []
    return roots + [Path.cwd() / "data", Path.home() / "data"]


def find_dataset_files(dataset: str = "mnist", split: str = "train", data_dir=None):
    """Locate ``(images, labels)`` IDX paths; plain or ``.gz``.

    Searched: ``data_dir`` (or ``$COMPDL_DATA_DIR``, ``./data``, ``~/data``),
    each both directly and under a ``<dataset>/`` subdirectory.
    """
    roots = [Path(data_dir)] if data_dir is not None else _default_roots()
    names = _IDX_NAMES[split]
    for root in roots:
        for base in (root / dataset, root):
            found = []
            for name in names:
                for candidate in (base / name, base / (name + ".gz")):
                    if candidate.is_file():
                        found.append(candidate)
                        break
            if len(found) == 2:
                return tuple(found)
    searched = ", ".join(str(r) for r in roots)
    raise FileNotFoundError(f"{dataset} {split} IDX files not found (searched {searched})")


def load_dataset(dataset: str = "mnist", split: str = "train", data_dir=None) -> LabeledDataset:
    images, labels = find_dataset_files(dataset, split, data_dir)
    return load_idx(images, labels, split)


# --------------------------------------------------------------------------
# shared container helpers
# --------------------------------------------------------------------------

def _exclusive_write(path, payload: bytes) -> None:
    """Write via a sibling lock file; fails if another writer holds the lock."""
    path = Path(path)
    lock = path.with_name(path.name + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise FileExistsError(f"{path} is being written by another process ({lock} exists)") from None
    try:
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        os.close(fd)
        os.unlink(lock)


def _seal(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def _open_sealed(path, magic: bytes) -> memoryview:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(magic) + 2 + 4:
        raise TruncatedFileError(f"{path}: too short")
    if raw[: len(magic)] != magic:
        raise BadMagicError(f"{path}: expected magic {magic!r}, found {raw[:len(magic)]!r}")
    body, crc = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ChecksumError(f"{path}: CRC-32 mismatch")
    version = struct.unpack("<H", body[len(magic) : len(magic) + 2])[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, this library reads {FORMAT_VERSION}")
    return memoryview(body)[len(magic) + 2 :]


# --------------------------------------------------------------------------
# projections
# --------------------------------------------------------------------------

def save_projection(p: SubsampledProjection, path) -> None:
    m, n, s = p.m, p.n, p.s
    body = b"CPRJ" + struct.pack("<HIII", FORMAT_VERSION, m, n, s)
    body += np.ascontiguousarray(p.base.spectrum, dtype="<c16").tobytes()
    body += np.ascontiguousarray(p.sampler.indices, dtype="<u8").tobytes()
    _exclusive_write(path, _seal(body))


def load_projection(path, grid=None) -> SubsampledProjection:
    """Read a CPRJ file.  ``grid`` restores the 2D output shape (inferred for raster grids)."""
    buf = _open_sealed(path, b"CPRJ")
    if len(buf) < 12:
        raise TruncatedFileError(f"{path}: header truncated")
    m, n, s = struct.unpack("<III", buf[:12])
    mn = m * n
    if mn > MAX_DECLARED_COUNT or s > mn:
        raise FormatError(f"{path}: implausible dims m={m}, n={n}, s={s}")
    if len(buf) != 12 + 16 * mn + 8 * s:
        raise FormatError(f"{path}: payload of {len(buf) - 12} bytes does not match m={m}, n={n}, s={s}")
    spectrum = np.frombuffer(buf[12 : 12 + 16 * mn], dtype="<c16").astype(np.complex128)
    indices = np.frombuffer(buf[12 + 16 * mn :], dtype="<u8").astype(np.int64)
    if grid is None:
        grid = _infer_grid(indices, m, n)
    sampler = DownsamplingOperator(mn, indices, grid=grid)
    return _make(from_spectrum(spectrum, m, n, renormalize=False), sampler)


def _infer_grid(indices, m, n):
    for k in range(1, min(m, n) + 1):
        rows, cols = np.arange(0, m, k), np.arange(0, n, k)
        if rows.size * cols.size == indices.size:
            if np.array_equal((rows[:, None] * n + cols[None, :]).ravel(), indices):
                return (rows.size, cols.size)
    return None


# --------------------------------------------------------------------------
# compressed datasets
# --------------------------------------------------------------------------

def save_compressed_dataset(features, labels, path) -> None:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ValueError(f"need a nonempty (N, h, w) feature array, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise CountMismatchError(f"{x.shape[0]} samples but labels of shape {y.shape}")
    count, h, w = x.shape
    body = b"CCDS" + struct.pack("<HIII", FORMAT_VERSION, count, h, w)
    body += x.astype("<f8").tobytes() + y.astype(np.uint8).tobytes()
    _exclusive_write(path, _seal(body))


def load_compressed_dataset(path):
    """Returns ``(features, labels)``."""
    buf = _open_sealed(path, b"CCDS")
    if len(buf) < 12:
        raise TruncatedFileError(f"{path}: header truncated")
    count, h, w = struct.unpack("<III", buf[:12])
    if count == 0:
        raise FormatError(f"{path}: empty dataset")
    if count > MAX_DECLARED_COUNT or h * w > MAX_DECLARED_COUNT:
        raise FormatError(f"{path}: implausible dims count={count}, {h}x{w}")
    nfeat = count * h * w
    if len(buf) != 12 + 8 * nfeat + count:
        raise FormatError(f"{path}: payload size does not match header dims {count}x{h}x{w}")
    x = np.frombuffer(buf[12 : 12 + 8 * nfeat], dtype="<f8").astype(np.float64).reshape(count, h, w)
    y = np.frombuffer(buf[12 + 8 * nfeat :], dtype=np.uint8).astype(np.int64)
    return x, y


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def save_checkpoint(spec, state: TrainState, path, extra: dict | None = None) -> None:
    arrays = {f"param/{k}": v for k, v in state.params.items()}
    arrays.update({f"adam_m/{k}": v for k, v in state.adam.m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in state.adam.v.items()})
    meta = {
        "spec": spec_to_dict(spec),
        "epoch": state.epoch,
        "history": [float(h).hex() for h in state.history],
        "adam": {
            "lr": float(state.adam.lr).hex(),
            "beta1": float(state.adam.beta1).hex(),
            "beta2": float(state.adam.beta2).hex(),
            "epsilon": float(state.adam.epsilon).hex(),
            "step": state.adam.step,
        },
        "shuffle_rng": state.shuffle_rng.bit_generator.state,
        "dropout_rng": state.dropout_rng.bit_generator.state,
        "extra": extra or {},
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = io.BytesIO()
    out.write(b"CCKP" + struct.pack("<HI", FORMAT_VERSION, len(meta_bytes)) + meta_bytes)
    out.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        out.write(struct.pack("<H", len(encoded)) + encoded)
        out.write(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        out.write(a.tobytes())
    _exclusive_write(path, _seal(out.getvalue()))


def _rng_from_state(state):
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)


def load_checkpoint(path):
    """Returns ``(spec, state, extra)``."""
    buf = _open_sealed(path, b"CCKP")
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise TruncatedFileError(f"{path}: payload ends early")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    if count > MAX_DECLARED_COUNT:
        raise FormatError(f"{path}: implausible array count {count}")
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        if size > MAX_DECLARED_COUNT * 10:
            raise FormatError(f"{path}: array {name} declares {size} values")
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes")

    def group(prefix):
        return {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith(prefix + "/")}

    a = meta["adam"]
    adam = AdamState(
        lr=float.fromhex(a["lr"]),
        beta1=float.fromhex(a["beta1"]),
        beta2=float.fromhex(a["beta2"]),
        epsilon=float.fromhex(a["epsilon"]),
        step=a["step"],
        m=group("adam_m"),
        v=group("adam_v"),
    )
    state = TrainState(
        params=group("param"),
        adam=adam,
        shuffle_rng=_rng_from_state(meta["shuffle_rng"]),
        dropout_rng=_rng_from_state(meta["dropout_rng"]),
        epoch=meta["epoch"],
        history=[float.fromhex(h) for h in meta["history"]],
    )
    return spec_from_dict(meta["spec"]), state, meta["extra"]
