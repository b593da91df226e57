"""Forward/inverse transforms: discrete Radon, backprojection, ramp filtering,
filtered backprojection, unitary 2-D DFT pair, and the line Hilbert transform.

Radon geometry: the line at angle phi with signed offset s is
{ s*theta + t*theta_perp }, theta = (cos phi, sin phi), theta_perp =
(-sin phi, cos phi). Angles are the uniform grid phi_i = i*pi/n_angles on
[0, pi); detector offsets span [-sqrt(2), sqrt(2)] so every line meeting the
FOV is covered.
"""

import math
from dataclasses import dataclass

import numpy as np

from .grid import FOV_HALF, Image, Sinogram, pixel_centers

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class RadonConfig:
    n_angles: int = 360
    n_detectors: int = 0  # 0 means "1.5x the image side", resolved per call
    interpolation: str = "bilinear"

    def __post_init__(self):
        if self.n_angles < 1:
            raise ValueError("n_angles must be >= 1")
        if self.n_detectors < 0:
            raise ValueError("n_detectors must be >= 0")
        if self.interpolation != "bilinear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")

    def resolve_detectors(self, n):
        return self.n_detectors if self.n_detectors else int(round(1.5 * n))

    def angle_grid(self):
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    def detector_grid(self, n):
        return np.linspace(-SQRT2, SQRT2, self.resolve_detectors(n))


@dataclass(frozen=True)
class FilterSpec:
    """Ramp |omega| (cycles per unit), hard-zeroed beyond cutoff * Nyquist,
    optionally apodized by a cosine window."""

    cutoff: float = 1.0
    cosine: bool = False

    def __post_init__(self):
        if not 0.0 < self.cutoff <= 1.0:
            raise ValueError("cutoff must be in (0, 1]")

    def response(self, freqs, nyquist):
        """Multiplier at the given frequencies (cycles per unit)."""
        band = self.cutoff * nyquist
        resp = np.abs(freqs)
        if self.cosine:
            resp = resp * np.cos(0.5 * np.pi * freqs / band)
        return np.where(np.abs(freqs) <= band + 1e-12, resp, 0.0)


def _bilinear_sample(values, fx, fy):
    """Sample image values at fractional pixel coordinates, zero outside."""
    n_rows, n_cols = values.shape
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    wx = fx - x0
    wy = fy - y0
    out = np.zeros(fx.shape, dtype=values.dtype)
    for dx, dy, w in (
        (0, 0, (1 - wx) * (1 - wy)),
        (1, 0, wx * (1 - wy)),
        (0, 1, (1 - wx) * wy),
        (1, 1, wx * wy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < n_cols) & (yi >= 0) & (yi < n_rows)
        contrib = np.zeros_like(out)
        contrib[ok] = values[yi[ok], xi[ok]] * w[ok]
        out += contrib
    return out


def radon(image: Image, cfg: RadonConfig = RadonConfig()) -> Sinogram:
    """Discrete line integrals by sampling each line at pixel-width steps.

    Values outside the FOV contribute zero. Complex input is rejected; CT is
    real-valued here.
    """
    if image.is_complex:
        raise ValueError("radon expects a real image")
    n = image.width
    if image.height != n:
        raise ValueError("radon expects a square image")
    vals = image.values
    step = 2.0 * FOV_HALF / n  # integration step = pixel width
    angles = cfg.angle_grid()
    dets = cfg.detector_grid(n)
    n_steps = int(math.ceil(2.0 * SQRT2 / step))
    t = -SQRT2 + (np.arange(n_steps) + 0.5) * (2.0 * SQRT2 / n_steps)
    out = np.empty((angles.size, dets.size))
    inv = 1.0 / step
    for i, phi in enumerate(angles):
        c, s = math.cos(phi), math.sin(phi)
        # sample points: s_j*theta + t_k*theta_perp, shape (n_det, n_steps)
        px = dets[:, None] * c + t[None, :] * (-s)
        py = dets[:, None] * s + t[None, :] * c
        fx = (px + FOV_HALF) * inv - 0.5
        fy = (py + FOV_HALF) * inv - 0.5
        out[i] = _bilinear_sample(vals, fx, fy).sum(axis=1)
    out *= 2.0 * SQRT2 / n_steps
    return Sinogram(angles, dets, out)


def backproject(sino: Sinogram, n, angle_weight=None) -> Image:
    """Adjoint-style smear: sum over angles of the sinogram value at each
    pixel's offset, linearly interpolated in s, times delta_phi.

    angle_weight overrides the default pi/n_angles (used when a sinogram holds
    only the kept rows of a larger angle grid).
    """
    dphi = (np.pi / sino.n_angles) if angle_weight is None else angle_weight
    xs = pixel_centers(n)
    x, y = np.meshgrid(xs, xs)
    dets = sino.detector_positions
    s0 = dets[0]
    ds = sino.detector_spacing()
    vals = sino.values
    n_det = dets.size
    out = np.zeros((n, n))
    for i, phi in enumerate(sino.angles):
        t = x * math.cos(phi) + y * math.sin(phi)
        f = (t - s0) / ds
        i0 = np.clip(np.floor(f).astype(np.int64), 0, n_det - 2)
        w = np.clip(f - i0, 0.0, 1.0)
        row = vals[i]
        out += (1.0 - w) * row[i0] + w * row[i0 + 1]
    return Image(out * dphi)


def _filter_rows(values, ds, spec: FilterSpec, pad_factor=1):
    """Apply the ramp/window multiplier along the last axis via FFT.

    pad_factor 1 keeps the circular convolution on the detector grid (the
    Riesz filter contract); larger factors zero-pad for linear convolution.
    """
    n_det = values.shape[-1]
    n_fft = n_det if pad_factor <= 1 else int(pad_factor) * n_det
    freqs = np.fft.fftfreq(n_fft, d=ds)
    nyquist = 0.5 / ds
    resp = spec.response(freqs, nyquist)
    spec_hat = np.fft.fft(values, n=n_fft, axis=-1) * resp
    return np.fft.ifft(spec_hat, axis=-1).real[..., :n_det]


def riesz_inv(sino: Sinogram, spec: FilterSpec = FilterSpec()) -> Sinogram:
    """Per-angle |omega| filter (the square root of minus the Laplacian in s).

    Circular on the detector grid, so an exact grid cosine at frequency w0 is
    an eigenvector with eigenvalue |w0|.
    """
    filtered = _filter_rows(sino.values, sino.detector_spacing(), spec, pad_factor=1)
    return Sinogram(sino.angles, sino.detector_positions, filtered)


def fbp(sino: Sinogram, n, spec: FilterSpec = FilterSpec()) -> Image:
    """Filtered backprojection: ramp-filter each angle row, then backproject.

    The filter runs on a 4x zero-padded grid (linear convolution); the
    detector span already gives wide zero margins around any FOV object, and
    padding removes the residual wrap-around bias on large objects.
    """
    filtered = _filter_rows(sino.values, sino.detector_spacing(), spec, pad_factor=4)
    return backproject(
        Sinogram(sino.angles, sino.detector_positions, filtered), n
    )


def dft2(image: Image) -> "np.ndarray":
    """Unitary 2-D DFT (1/sqrt(n) forward) of a square image; returns the
    complex k-space array."""
    if image.height != image.width:
        raise ValueError("dft2 expects a square image")
    return np.fft.fft2(image.values, norm="ortho")


def idft2(kspace) -> Image:
    """Unitary inverse of dft2. Accepts a KSpaceGrid or a complex array."""
    values = getattr(kspace, "values", kspace)
    return Image(np.fft.ifft2(values, norm="ortho"))


def hilbert_line(samples, spacing=1.0):
    """Hilbert transform of a sampled line: PV convolution with 1/(pi*a).

    Computed as the -i*sign(omega) multiplier on a 4x zero-padded FFT to
    suppress wrap-around. The kernel is scale invariant, so `spacing` only
    fixes the physical grid (and must be positive).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 8:
        raise ValueError("need a 1-D line of at least 8 samples")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    n = samples.size
    n_fft = 4 * n
    freqs = np.fft.fftfreq(n_fft)
    mult = -1j * np.sign(freqs)
    out = np.fft.ifft(np.fft.fft(samples, n=n_fft) * mult)
    return out.real[:n]
