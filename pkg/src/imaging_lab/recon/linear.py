"""Linear subspace baselines: PCA basis fitting and projection reconstruction."""

from dataclasses import dataclass

import numpy as np

from ..grid import Image
from ..manifold import cached_operator
from ..sampling import SamplingPattern


def _as_rows(images):
    """Stack images (or bare arrays) into a (count, n_pixels) matrix."""
    rows = [im.values if isinstance(im, Image) else np.asarray(im) for im in images]
    shape = rows[0].shape
    for r in rows:
        if r.shape != shape:
            raise ValueError("images in a PCA set must share one shape")
    return np.stack([r.ravel() for r in rows]), shape


@dataclass(frozen=True)
class PcaBasis:
    """Orthonormal image basis; columns of `components` are raveled images.

    No mean removal: the basis diagonalizes the raw second-moment matrix
    Y^T Y, so `mean` is carried for inspection only.
    """

    components: np.ndarray  # (n_pixels, k)
    eigenvalues: np.ndarray  # (k,), descending
    mean: np.ndarray  # (n_pixels,)
    shape: tuple

    def __post_init__(self):
        gram = self.components.T @ self.components
        if np.abs(gram - np.eye(self.k)).max() > 1e-8:
            raise ValueError("PCA components are not orthonormal")

    @property
    def k(self):
        return self.components.shape[1]

    def component_image(self, j) -> Image:
        return Image(self.components[:, j].reshape(self.shape))


def pca_fit(train_images, k) -> PcaBasis:
    """Top-k second-moment eigenbasis of a small image set.

    Works in sample space (count << pixels): eigendecompose the count x count
    Gram matrix and lift the eigenvectors back, then re-orthonormalize to mop
    up roundoff from near-zero eigenvalues.
    """
    rows, shape = _as_rows(train_images)
    count = rows.shape[0]
    if not 1 <= k <= count:
        raise ValueError(f"k={k} must be in 1..{count}")
    gram = rows @ rows.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1][:k]
    evals = np.maximum(evals[order], 0.0)
    lifted = rows.T @ evecs[:, order]
    scale = np.sqrt(np.where(evals > 0, evals, 1.0))
    q, _ = np.linalg.qr(lifted / scale)
    return PcaBasis(components=q, eigenvalues=evals, mean=rows.mean(axis=0),
                    shape=shape)


def pca_recon(x: Image, basis: PcaBasis, pattern: SamplingPattern) -> Image:
    """Least-squares fit of the measured image over the mapped basis.

    Solves min_c ||A#A D c - x||^2 and returns D c; rank-deficient systems get
    the minimum-norm coefficient vector.
    """
    if (x.height, x.width) != basis.shape:
        raise ValueError("image and basis shapes differ")
    op = cached_operator(pattern, x.height)
    mapped = op @ basis.components
    coeffs, *_ = np.linalg.lstsq(mapped, x.values.ravel(), rcond=None)
    return Image((basis.components @ coeffs).reshape(basis.shape))
