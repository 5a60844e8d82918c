"""Row-subsampled unitary BCCB operators and the PCA-guided construction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bccb import UnitaryBccb, from_spectrum, nearest_unitary_bccb, normalize_spectrum
from .pca import fit_pca

__all__ = [
    "DownsamplingOperator",
    "SubsampledProjection",
    "grid_sampler",
    "zero_pad",
    "subsample_rows",
    "bccb_rows",
    "spectrum_from_padded_rows",
    "projection_from_rows",
    "build_projection",
    "compress",
]


@dataclass(frozen=True, eq=False)
class DownsamplingOperator:
    """Injective map from ``range(s)`` to ``range(mn)`` (0-based row indices).

    ``grid`` is the 2D shape of the output when the indices form a raster grid.
    """

    mn: int
    indices: np.ndarray
    grid: tuple | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size == 0:
            raise ValueError("a downsampling operator needs at least one index")
        if idx.min() < 0 or idx.max() >= self.mn:
            raise ValueError(f"indices must lie in [0, {self.mn})")
        if np.unique(idx).size != idx.size:
            raise ValueError("downsampling indices must be distinct")
        if self.grid is not None and int(np.prod(self.grid)) != idx.size:
            raise ValueError(f"grid {self.grid} does not hold {idx.size} samples")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def s(self) -> int:
        return self.indices.size


def grid_sampler(m: int, n: int, stride: int) -> DownsamplingOperator:
    """Raster positions ``(a*stride, b*stride)`` of an ``m x n`` image, row-major."""
    if not 1 <= stride <= min(m, n):
        raise ValueError(f"stride must be in 1..{min(m, n)}, got {stride}")
    rows = np.arange(0, m, stride)
    cols = np.arange(0, n, stride)
    idx = (rows[:, None] * n + cols[None, :]).ravel()
    return DownsamplingOperator(m * n, idx, grid=(rows.size, cols.size))


def zero_pad(w, sampler: DownsamplingOperator) -> np.ndarray:
    """Place row ``i`` of the ``s x mn`` matrix ``w`` at row ``indices[i]``; zeros elsewhere."""
    w = np.asarray(w)
    if w.shape != (sampler.s, sampler.mn):
        raise ValueError(f"expected a {sampler.s}x{sampler.mn} matrix, got {w.shape}")
    out = np.zeros((sampler.mn, sampler.mn), dtype=w.dtype)
    out[sampler.indices] = w
    return out


def subsample_rows(c, sampler: DownsamplingOperator) -> np.ndarray:
    """Rows ``indices`` of a dense ``mn x mn`` matrix."""
    c = np.asarray(c)
    if c.shape != (sampler.mn, sampler.mn):
        raise ValueError(f"expected a {sampler.mn}x{sampler.mn} matrix, got {c.shape}")
    return c[sampler.indices]


def bccb_rows(b: UnitaryBccb, indices) -> np.ndarray:
    """Selected rows of ``C = F diag(c) F*`` without forming ``C``.

    Row ``r`` is ``conj(C* e_r)``.  Returned real when the imaginary part
    vanishes to rounding (conjugate-symmetric spectra).
    """
    idx = np.asarray(indices, dtype=np.int64)
    deltas = np.zeros((idx.size, b.size))
    deltas[np.arange(idx.size), idx] = 1.0
    deltas = deltas.reshape(idx.size, b.m, b.n)
    t = np.fft.fft2(deltas, axes=(1, 2), norm="ortho") * np.conj(b.spectrum).reshape(b.m, b.n)
    rows = np.conj(np.fft.ifft2(t, axes=(1, 2), norm="ortho")).reshape(idx.size, b.size)
    if np.max(np.abs(rows.imag), initial=0.0) < 1e-9:
        return rows.real.copy()
    return rows


def spectrum_from_padded_rows(w, sampler: DownsamplingOperator, m: int, n: int) -> np.ndarray:
    """``diag(F* rho(W) F)`` computed from the ``s`` nonzero rows only."""
    w = np.asarray(w)
    if w.shape != (sampler.s, m * n) or sampler.mn != m * n:
        raise ValueError(f"expected a {sampler.s}x{m * n} matrix for a sampler on {sampler.mn} rows")
    rows_hat = np.fft.ifft2(w.reshape(-1, m, n), axes=(1, 2), norm="ortho")  # F w_i
    deltas = np.zeros((sampler.s, m * n))
    deltas[np.arange(sampler.s), sampler.indices] = 1.0
    deltas_hat = np.fft.fft2(deltas.reshape(-1, m, n), axes=(1, 2), norm="ortho")  # F* e_psi(i)
    return (deltas_hat * rows_hat).sum(axis=0).ravel()


@dataclass(frozen=True, eq=False)
class SubsampledProjection:
    base: UnitaryBccb
    sampler: DownsamplingOperator
    rows: np.ndarray  # s x mn, the selected rows of the base operator

    @property
    def s(self) -> int:
        return self.sampler.s

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def compression(self) -> float:
        return self.base.size / self.s


def _make(base: UnitaryBccb, sampler: DownsamplingOperator) -> SubsampledProjection:
    rows = bccb_rows(base, sampler.indices)
    rows.setflags(write=False)
    return SubsampledProjection(base=base, sampler=sampler, rows=rows)


def projection_from_rows(w, sampler: DownsamplingOperator, m: int, n: int, dense: bool = False) -> SubsampledProjection:
    """Nearest subsampled unitary BCCB to an ``s x mn`` matrix ``w``.

    ``dense=True`` goes through the explicit ``mn x mn`` zero-padded matrix;
    the default evaluates the same diagonal from the ``s`` nonzero rows.
    """
    if dense:
        base = nearest_unitary_bccb(zero_pad(w, sampler), m, n)
    else:
        base = from_spectrum(normalize_spectrum(spectrum_from_padded_rows(w, sampler, m, n)), m, n)
    return _make(base, sampler)


def build_projection(images, sampler: DownsamplingOperator | None = None, stride: int | None = None,
                     pca=None) -> SubsampledProjection:
    """PCA on ``images`` then the nearest subsampled unitary BCCB to ``P_s``.

    Give either a ``sampler`` or a ``stride`` (raster grid).  A precomputed
    PCA with at least ``s`` components may be passed to skip the fit.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[0] == 0:
        raise ValueError(f"need a nonempty stack of m x n images, got shape {images.shape}")
    _, m, n = images.shape
    if sampler is None:
        if stride is None:
            raise ValueError("pass a sampler or a stride")
        sampler = grid_sampler(m, n, stride)
    if sampler.mn != m * n:
        raise ValueError(f"sampler is for {sampler.mn} pixels, images have {m * n}")
    if pca is None or pca.s < sampler.s:
        pca = fit_pca(images, sampler.s)
    return projection_from_rows(pca.components[: sampler.s], sampler, m, n)


def compress(p: SubsampledProjection, image) -> np.ndarray:
    """``rows @ vec(image)``; accepts one ``m x n`` image or a stack of them."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape[-2:] != (p.m, p.n):
        raise ValueError(f"image shape {image.shape} does not match projection dims {(p.m, p.n)}")
    flat = image.reshape(*image.shape[:-2], p.m * p.n)
    return flat @ p.rows.T
