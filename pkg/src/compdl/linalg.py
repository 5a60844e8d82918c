"""Dense matrix helpers and the unitary 2D DFT used throughout the package.

Conventions
-----------
``F_{m,n} = F_m (x) F_n`` with ``(F_n)_{jk} = exp(+2*pi*i*j*k/n) / sqrt(n)``.
Images of shape ``(m, n)`` are vectorized in row-major order, so applying
``F*_{m,n}`` to a vectorized image is ``numpy.fft.fft2(..., norm="ortho")``.

``dft2_forward`` applies ``F*`` and ``dft2_adjoint`` applies ``F``.  With this
choice a BCCB matrix ``C`` whose first column is ``c`` satisfies
``F* C F = sqrt(mn) * diag(F* c)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dft2Plan",
    "dft2_forward",
    "dft2_adjoint",
    "dft_matrix",
    "dft2_matrix",
    "frobenius_norm",
    "chordal_distance",
]


@dataclass(frozen=True)
class Dft2Plan:
    """Shape of a 2D transform: ``m`` blocks of size ``n``."""

    m: int
    n: int

    def __post_init__(self):
        if int(self.m) < 1 or int(self.n) < 1:
            raise ValueError(f"Dft2Plan needs m >= 1 and n >= 1, got m={self.m}, n={self.n}")

    @property
    def size(self) -> int:
        return self.m * self.n


def _as_grid(x, plan: Dft2Plan) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != plan.size:
        raise ValueError(
            f"expected a vector of length m*n = {plan.m}*{plan.n} = {plan.size}, "
            f"got shape {x.shape}"
        )
    return x.reshape(plan.m, plan.n)


def dft2_forward(x, plan: Dft2Plan) -> np.ndarray:
    """Return ``F*_{m,n} x`` for a length-``mn`` vector ``x``."""
    return np.fft.fft2(_as_grid(x, plan), norm="ortho").ravel()


def dft2_adjoint(x, plan: Dft2Plan) -> np.ndarray:
    """Return ``F_{m,n} x``, the inverse of :func:`dft2_forward`."""
    return np.fft.ifft2(_as_grid(x, plan), norm="ortho").ravel()


def dft_matrix(n: int) -> np.ndarray:
    """Explicit ``F_n`` (dense, O(n^2)); meant for small sizes and checks."""
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def dft2_matrix(m: int, n: int) -> np.ndarray:
    """Explicit ``F_{m,n} = F_m (x) F_n``."""
    return np.kron(dft_matrix(m), dft_matrix(n))


def frobenius_norm(a) -> float:
    a = np.asarray(a)
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def chordal_distance(a, b) -> float:
    """Chordal distance ``0.5 * ||A*A - B*B||_F`` between two row spaces.

    Meaningful as a subspace distance when both ``a`` and ``b`` have
    orthonormal rows.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"chordal_distance needs two matrices of equal shape, got {a.shape} and {b.shape}")
    ga = a.conj().T @ a
    gb = b.conj().T @ b
    return 0.5 * frobenius_norm(ga - gb)
