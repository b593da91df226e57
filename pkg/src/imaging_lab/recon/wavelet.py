"""Orthogonal 2-D wavelet transforms with periodic boundary."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..grid import Image

_SQRT3 = np.sqrt(3.0)

# Analysis lowpass filters; the highpass is the quadrature mirror.
_LOWPASS = {
    "haar": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "db4": np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3])
    / (4.0 * np.sqrt(2.0)),
}


def _filters(kind):
    key = str(kind).lower()
    if key not in _LOWPASS:
        raise ValueError(f"unknown wavelet kind {kind!r}; choose haar or db4")
    lo = _LOWPASS[key]
    hi = lo[::-1].copy()
    hi[1::2] *= -1.0
    return key, lo, hi


@lru_cache(maxsize=32)
def _step_matrix(n, kind):
    """n x n orthogonal single-level analysis matrix (periodic wrap)."""
    _, lo, hi = _filters(kind)
    if n % 2 or n < 2:
        raise ValueError(f"side {n} must be even for a {kind} step")
    w = np.zeros((n, n))
    half = n // 2
    for i in range(half):
        for k in range(len(lo)):
            col = (2 * i + k) % n
            w[i, col] += lo[k]
            w[half + i, col] += hi[k]
    return w


@dataclass(frozen=True)
class WaveletCoeffs:
    """Quadrant-layout coefficient array plus what is needed to invert it."""

    values: np.ndarray
    kind: str
    levels: int

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("coefficient array must be square")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "kind", _filters(self.kind)[0])
        if self.levels < 1:
            raise ValueError("levels must be >= 1")


def _check_levels(n, kind, levels):
    _filters(kind)
    if n % (1 << levels):
        raise ValueError(f"side {n} is not divisible by 2^{levels}")


def dwt2(values, kind="haar", levels=4):
    """Separable periodic DWT of a square array; [LL LH; HL HH] per level."""
    out = np.array(values, dtype=float)
    n = out.shape[0]
    _check_levels(n, kind, levels)
    size = n
    for _ in range(levels):
        w = _step_matrix(size, kind)
        out[:size, :size] = w @ out[:size, :size] @ w.T
        size //= 2
    return out


def idwt2(coeffs, kind="haar", levels=4):
    """Inverse of dwt2; exact up to roundoff since each step is orthogonal."""
    out = np.array(coeffs, dtype=float)
    n = out.shape[0]
    _check_levels(n, kind, levels)
    size = n >> (levels - 1)
    for _ in range(levels):
        w = _step_matrix(size, kind)
        out[:size, :size] = w.T @ out[:size, :size] @ w
        size *= 2
    return out


def wavelet_fwd(img, kind="haar", levels=4) -> WaveletCoeffs:
    """Forward transform of an image (or bare array)."""
    values = img.values if isinstance(img, Image) else np.asarray(img)
    if np.iscomplexobj(values):
        raise ValueError("wavelet transform expects a real image")
    key = _filters(kind)[0]
    return WaveletCoeffs(dwt2(values, key, levels), key, levels)


def wavelet_inv(coeffs: WaveletCoeffs) -> Image:
    """Reconstruct the image from its coefficient quadrants."""
    return Image(idwt2(coeffs.values, coeffs.kind, coeffs.levels))
