"""Principal components of a vectorized image set."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PcaProjection", "fit_pca", "pca_compress", "apply_sign_convention"]


@dataclass(frozen=True)
class PcaProjection:
    """Top-``s`` principal directions of an image set.

    ``components`` is ``s x mn`` with orthonormal rows ordered by decreasing
    singular value of the mean-centred data matrix.
    """

    m: int
    n: int
    components: np.ndarray
    mean: np.ndarray
    singular_values: np.ndarray

    @property
    def s(self) -> int:
        return self.components.shape[0]

    def reconstruct(self, coeffs, centered: bool = False) -> np.ndarray:
        x = np.asarray(coeffs) @ self.components
        if centered:
            x = x + self.mean
        return x.reshape(self.m, self.n)


def apply_sign_convention(rows: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry (lowest index on ties) is positive."""
    rows = np.array(rows, copy=True)
    pivot = np.argmax(np.abs(rows), axis=1)
    signs = np.sign(rows[np.arange(rows.shape[0]), pivot])
    signs[signs == 0] = 1.0
    return rows * signs[:, None]


def fit_pca(images, s: int) -> PcaProjection:
    """Fit PCA on images already scaled to [0, 1].

    Uses a dense symmetric eigensolver on the ``mn x mn`` sample covariance.
    """
    x = np.asarray(images, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ValueError(f"need a nonempty stack of m x n images, got shape {x.shape}")
    num, m, n = x.shape
    mn = m * n
    if not 1 <= s <= mn:
        raise ValueError(f"number of components must be in 1..{mn}, got {s}")
    flat = x.reshape(num, mn)
    mean = flat.mean(axis=0)
    centered = flat - mean
    scatter = centered.T @ centered
    evals, evecs = np.linalg.eigh(scatter)
    # eigh returns ascending eigenvalues
    top = evecs[:, ::-1][:, :s]
    vals = np.clip(evals[::-1][:s], 0.0, None)
    components = apply_sign_convention(top.T)
    return PcaProjection(m=m, n=n, components=components, mean=mean, singular_values=np.sqrt(vals))


def pca_compress(p: PcaProjection, image, centered: bool = False) -> np.ndarray:
    """Coefficients ``P_s x`` of a raw image (``centered`` subtracts the mean first)."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape[-2:] != (p.m, p.n):
        raise ValueError(f"image shape {image.shape} does not match PCA dims {(p.m, p.n)}")
    flat = image.reshape(*image.shape[:-2], p.m * p.n)
    if centered:
        flat = flat - p.mean
    return flat @ p.components.T
