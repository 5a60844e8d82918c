"""Unitary block-circulant matrices with circulant blocks (BCCB).

A unitary BCCB of block shape ``(m, n)`` is stored by its spectrum ``c`` on
the torus: ``C = F diag(c) F*`` with ``F = F_{m,n}`` (see :mod:`compdl.linalg`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import Dft2Plan, dft2_adjoint, dft2_forward

__all__ = [
    "UnitaryBccb",
    "from_spectrum",
    "nearest_unitary_bccb",
    "normalize_spectrum",
    "bccb_diagonal",
    "materialize",
    "apply_fast",
    "apply_adjoint_fast",
    "is_conjugate_symmetric",
    "bccb_from_column",
]

ZERO_RTOL = 1e-12
MODULUS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class UnitaryBccb:
    m: int
    n: int
    spectrum: np.ndarray  # length m*n, unit modulus

    @property
    def plan(self) -> Dft2Plan:
        return Dft2Plan(self.m, self.n)

    @property
    def size(self) -> int:
        return self.m * self.n


def from_spectrum(c, m: int, n: int, renormalize: bool = True) -> UnitaryBccb:
    """Wrap a unit-modulus spectrum; entries are renormalized to exactly |c_i| = 1.

    With ``renormalize=False`` the values are kept bit-for-bit and must
    already have modulus 1 within 1e-9.
    """
    c = np.asarray(c, dtype=np.complex128).ravel()
    if c.shape[0] != m * n:
        raise ValueError(f"spectrum has {c.shape[0]} entries, expected m*n = {m * n}")
    mag = np.abs(c)
    if np.any(~np.isfinite(c)) or np.any(mag < MODULUS_TOL):
        raise ValueError("spectrum entries must be finite with modulus >= 1e-9 to be normalized")
    if renormalize:
        spectrum = c / mag
    elif np.max(np.abs(mag - 1.0)) > MODULUS_TOL:
        raise ValueError("spectrum entries must have modulus 1 within 1e-9")
    else:
        spectrum = c.copy()
    spectrum.setflags(write=False)
    return UnitaryBccb(int(m), int(n), spectrum)


def normalize_spectrum(y, rtol: float = ZERO_RTOL) -> np.ndarray:
    """Closest torus point: ``y_i / |y_i|``, and 1 where ``y_i`` is (numerically) zero."""
    y = np.asarray(y, dtype=np.complex128)
    mag = np.abs(y)
    top = mag.max(initial=0.0)
    out = np.ones_like(y)
    if top == 0.0:
        return out
    live = mag > rtol * top
    out[live] = y[live] / mag[live]
    return out


def bccb_diagonal(w, m: int, n: int) -> np.ndarray:
    """``diag(F* W F)`` for a dense ``mn x mn`` matrix ``W``."""
    w = np.asarray(w)
    mn = m * n
    if w.shape != (mn, mn):
        raise ValueError(f"W must be {mn}x{mn} for block shape ({m}, {n}), got {w.shape}")
    grid = w.reshape(m, n, m, n)
    # F* on the row index, F on the column index
    t = np.fft.fft2(grid, axes=(0, 1), norm="ortho")
    t = np.fft.ifft2(t, axes=(2, 3), norm="ortho")
    return np.diagonal(t.reshape(mn, mn)).copy()


def nearest_unitary_bccb(w, m: int, n: int) -> UnitaryBccb:
    """Unitary BCCB ``C`` minimizing ``||W - C||_F``."""
    w = np.asarray(w)
    if not np.all(np.isfinite(w)):
        raise ValueError("W has non-finite entries")
    y = bccb_diagonal(w, m, n)
    return from_spectrum(normalize_spectrum(y), m, n)


def is_conjugate_symmetric(c, m: int, n: int, tol: float = 1e-12) -> bool:
    """True when ``c[-a, -b] == conj(c[a, b])`` (indices mod m, n)."""
    g = np.asarray(c).reshape(m, n)
    flipped = np.roll(g[::-1, ::-1], shift=(1, 1), axis=(0, 1))
    return bool(np.max(np.abs(flipped - np.conj(g)), initial=0.0) <= tol)


def apply_fast(b: UnitaryBccb, x) -> np.ndarray:
    """``C x`` via two 2D FFTs."""
    x = np.asarray(x)
    if x.shape != (b.size,):
        raise ValueError(f"vector length {x.shape} does not match operator size {b.size}")
    return dft2_adjoint(b.spectrum * dft2_forward(x, b.plan), b.plan)


def apply_adjoint_fast(b: UnitaryBccb, x) -> np.ndarray:
    """``C* x``."""
    x = np.asarray(x)
    if x.shape != (b.size,):
        raise ValueError(f"vector length {x.shape} does not match operator size {b.size}")
    return dft2_adjoint(np.conj(b.spectrum) * dft2_forward(x, b.plan), b.plan)


def materialize(b: UnitaryBccb) -> np.ndarray:
    """Dense ``C``; real-valued when the spectrum is conjugate symmetric."""
    eye = np.eye(b.size).reshape(b.size, b.m, b.n)
    cols = np.fft.fft2(eye, axes=(1, 2), norm="ortho") * b.spectrum.reshape(b.m, b.n)
    cols = np.fft.ifft2(cols, axes=(1, 2), norm="ortho").reshape(b.size, b.size)
    dense = cols.T  # row k of `cols` is C e_k
    if is_conjugate_symmetric(b.spectrum, b.m, b.n, tol=1e-10):
        residue = np.max(np.abs(dense.imag), initial=0.0)
        if residue >= 1e-9:
            raise ArithmeticError(f"conjugate-symmetric spectrum gave imaginary residue {residue:.3e}")
        return dense.real.copy()
    return dense


def bccb_from_column(c, m: int, n: int) -> np.ndarray:
    """Dense BCCB whose first column is ``c``: ``C[(a,b),(a',b')] = c[(a-a') % m, (b-b') % n]``."""
    g = np.asarray(c).reshape(m, n)
    a = np.arange(m)
    bb = np.arange(n)
    da = (a[:, None] - a[None, :]) % m
    db = (bb[:, None] - bb[None, :]) % n
    return g[da[:, None, :, None], db[None, :, None, :]].reshape(m * n, m * n)
