"""Subsampling patterns and the zero-filled adjoint reconstruction A#A.

Index convention: array axis 0 (rows) is the phase-encode / k2 direction,
axis 1 (columns) is k1. MRI patterns keep whole k-space rows. The uniform
factor-4 pattern keeps rows k2 = 0 mod 4; by Poisson summation the zero-filled
reconstruction folds the image along rows,

    x[b, a] = (1/4) * sum over b' = b mod N/4 of y[b', a],

so the image repeats four times at quarter-height offsets with weight 1/4.
"canonical measurement order" is row-major over the kept mask entries.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .grid import FOV_HALF, Image, Sinogram, pixel_centers
from .xform import FilterSpec, RadonConfig, _filter_rows, dft2, fbp, idft2, radon


# --- schemes ----------------------------------------------------------------


@dataclass(frozen=True)
class MriUniform:
    """Keep every factor-th k-space row."""

    size: int
    factor: int = 4

    def __post_init__(self):
        if self.size % (2 * self.factor) != 0:
            raise ValueError("size must be divisible by twice the factor")

    def kept_rows(self):
        return np.arange(0, self.size, self.factor)


def low_frequency_rows(size, count, factor=4):
    """The `count` lowest-frequency rows not already on the factor grid,
    ordered by frequency magnitude (positive index first on ties)."""
    order = sorted(
        (r for r in range(size) if r % factor != 0),
        key=lambda r: (min(r, size - r), r),
    )
    if count > len(order):
        raise ValueError("count exceeds available off-grid rows")
    return np.array(sorted(order[:count]))


@dataclass(frozen=True)
class MriUniformPlus:
    """Uniform factor-4 rows plus extra phase-encoding lines.

    extra_lines counts additional low-frequency rows (default 1, the k2 = 1
    line); explicit indices override the count.
    """

    size: int
    factor: int = 4
    extra_lines: int = 1
    extra_line_indices: tuple = ()

    def __post_init__(self):
        if self.size % (2 * self.factor) != 0:
            raise ValueError("size must be divisible by twice the factor")
        if self.extra_line_indices:
            idx = tuple(int(i) for i in self.extra_line_indices)
            for i in idx:
                if not 0 <= i < self.size:
                    raise ValueError(f"extra line {i} outside grid")
                if i % self.factor == 0:
                    raise ValueError(f"extra line {i} already on the uniform grid")
            object.__setattr__(self, "extra_line_indices", idx)
            object.__setattr__(self, "extra_lines", len(idx))
        else:
            if self.extra_lines < 1:
                raise ValueError("need at least one extra line")
            idx = tuple(
                int(i) for i in low_frequency_rows(self.size, self.extra_lines, self.factor)
            )
            object.__setattr__(self, "extra_line_indices", idx)

    def kept_rows(self):
        base = set(range(0, self.size, self.factor))
        base.update(self.extra_line_indices)
        return np.array(sorted(base))


@dataclass(frozen=True)
class CtSparseView:
    """Keep a subset of the angle rows of a sinogram grid."""

    radon_cfg: RadonConfig
    kept_angle_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.kept_angle_indices)
        if not idx:
            raise ValueError("need at least one kept angle")
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate kept angles")
        for i in idx:
            if not 0 <= i < self.radon_cfg.n_angles:
                raise ValueError(f"angle index {i} outside grid")
        object.__setattr__(self, "kept_angle_indices", tuple(sorted(idx)))

    @staticmethod
    def equispaced(radon_cfg, count):
        if radon_cfg.n_angles % count != 0:
            raise ValueError("count must divide n_angles for an equispaced view")
        step = radon_cfg.n_angles // count
        return CtSparseView(radon_cfg, tuple(range(0, radon_cfg.n_angles, step)))


@dataclass(frozen=True)
class CtInterior:
    """Keep only detector bins whose line meets a disk region of interest."""

    radon_cfg: RadonConfig
    roi_center: tuple
    roi_radius: float

    def __post_init__(self):
        cx, cy = self.roi_center
        if self.roi_radius <= 0:
            raise ValueError("roi_radius must be positive")
        if math.hypot(cx, cy) + self.roi_radius > math.sqrt(2.0):
            raise ValueError("region of interest leaves the scanned disk")
        object.__setattr__(self, "roi_center", (float(cx), float(cy)))


@dataclass(frozen=True)
class SamplingPattern:
    """A scheme plus its derived boolean mask over the measurement grid."""

    scheme: object
    image_side: int = 0  # CT schemes need the image side to size the mask

    @property
    def modality(self):
        return "mri" if isinstance(self.scheme, (MriUniform, MriUniformPlus)) else "ct"

    def mask(self):
        s = self.scheme
        if isinstance(s, (MriUniform, MriUniformPlus)):
            m = np.zeros((s.size, s.size), dtype=bool)
            m[s.kept_rows(), :] = True
            return m
        if isinstance(s, CtSparseView):
            n_det = s.radon_cfg.resolve_detectors(self._side())
            m = np.zeros((s.radon_cfg.n_angles, n_det), dtype=bool)
            m[list(s.kept_angle_indices), :] = True
            return m
        if isinstance(s, CtInterior):
            cfg = s.radon_cfg
            angles = cfg.angle_grid()
            dets = cfg.detector_grid(self._side())
            cx, cy = s.roi_center
            proj = cx * np.cos(angles) + cy * np.sin(angles)
            return np.abs(dets[None, :] - proj[:, None]) <= s.roi_radius
        raise TypeError(f"unknown scheme {type(s).__name__}")

    def _side(self):
        if self.modality == "ct" and self.image_side < 2:
            raise ValueError("CT patterns need image_side")
        return self.image_side

    def measurement_count(self):
        return int(self.mask().sum())


def subsample(data, pattern: SamplingPattern):
    """Measurement vector in canonical (row-major over the mask) order.

    data: k-space array/KSpaceGrid for MRI, Sinogram for CT.
    """
    values = getattr(data, "values", data)
    mask = pattern.mask()
    if values.shape != mask.shape:
        raise ValueError(f"data shape {values.shape} != mask shape {mask.shape}")
    return values[mask].copy()


def zero_fill(measurements, pattern: SamplingPattern):
    """Scatter a canonical measurement vector back onto the grid, zeros
    elsewhere. Returns a plain array shaped like the mask."""
    mask = pattern.mask()
    measurements = np.asarray(measurements)
    if measurements.shape != (int(mask.sum()),):
        raise ValueError("measurement count does not match pattern")
    out = np.zeros(mask.shape, dtype=measurements.dtype)
    out[mask] = measurements
    return out


def asharp_a(image: Image, pattern: SamplingPattern,
             filt: FilterSpec = FilterSpec()) -> Image:
    """x = A# A y: forward transform, subsample, zero-fill, crude inverse.

    MRI: idft2 o zerofill o subsample o dft2 (an orthogonal projection).
    CT: fbp o zerofill o subsample o radon (zero-filled FBP).
    """
    s = pattern.scheme
    if pattern.modality == "mri":
        if image.width != s.size or image.height != s.size:
            raise ValueError("image does not match pattern size")
        k = dft2(image)
        return idft2(zero_fill(subsample(k, pattern), pattern))
    n = image.width
    if pattern.image_side and pattern.image_side != n:
        raise ValueError("image does not match pattern side")
    sino = radon(image, s.radon_cfg)
    filled = zero_fill(subsample(sino, pattern), pattern)
    return fbp(Sinogram(sino.angles, sino.detector_positions, filled), n, filt)


def alias_uniform4(image: Image) -> Image:
    """Direct Poisson-summation fold for the uniform factor-4 pattern:
    average the four quarter-height bands and tile the result."""
    v = image.values
    n = v.shape[0]
    if n % 4 != 0:
        raise ValueError("height must be divisible by 4")
    folded = v.reshape(4, n // 4, v.shape[1]).mean(axis=0)
    return Image(np.tile(folded, (4, 1)))


@dataclass(frozen=True)
class NullVector:
    """Two-pixel +-1 difference invisible to the uniform factor-4 pattern."""

    a_star: int  # column index
    b_star: int  # row index
    beta: int
    image: Image


def null_vector(a_star, b_star, beta, n) -> NullVector:
    """psi with +1 at (row b*, col a*) and -1 at row b* + beta*n/4 (mod n)."""
    if n % 4 != 0:
        raise ValueError("side must be divisible by 4")
    if not 0 <= a_star < n or not 0 <= b_star < n:
        raise ValueError("pixel outside grid")
    if beta % 4 == 0:
        raise ValueError("beta must be nonzero modulo 4")
    v = np.zeros((n, n))
    v[b_star, a_star] = 1.0
    v[(b_star + beta * (n // 4)) % n, a_star] = -1.0
    return NullVector(a_star, b_star, beta, Image(v))


def decompose_x1_x2(image: Image, pattern: SamplingPattern):
    """Split x = A#A y into the uniform-4 fold x1 and the extra-line part x2.

    For one extra line l (N = side),
        x2[b, a] = (1/N) * sum over b' of y[b', a] * exp(2i*pi*(b - b')*l/N);
    the 1/N factor comes from the zero-fill route (the source equation leaves
    the normalization implicit). Returns (x1, x2) as Images; x1 + x2 equals
    asharp_a(y, pattern) to machine precision.
    """
    s = pattern.scheme
    if not isinstance(s, MriUniformPlus):
        raise ValueError("decomposition applies to uniform-plus patterns")
    if s.factor != 4:
        raise ValueError("fold term is defined for factor 4")
    v = image.values
    if v.shape != (s.size, s.size):
        raise ValueError("image does not match pattern size")
    x1 = alias_uniform4(image)
    b = np.arange(s.size)
    x2 = np.zeros((s.size, s.size), dtype=complex)
    for ell in s.extra_line_indices:
        phase = np.exp(-2j * np.pi * ell * b / s.size)
        coeff = phase[:, None].conj() * ((phase[:, None] * v).sum(axis=0) / s.size)
        x2 = x2 + coeff
    return x1, Image(x2)


# --- dense operator assembly -------------------------------------------------


def asharp_a_matrix(pattern: SamplingPattern, n) -> np.ndarray:
    """Dense matrix of A#A acting on flattened n x n images.

    MRI masks give a complex projection matrix; CT patterns give the real
    zero-filled-FBP normal map. Intended for experiment-scale grids.
    """
    if pattern.modality == "mri":
        size = pattern.scheme.size
        if n != size:
            raise ValueError("n must equal the pattern size")
        mat = np.empty((n * n, n * n), dtype=complex)
        basis = np.zeros((n, n))
        for j in range(n * n):
            basis.flat[j] = 1.0
            mat[:, j] = asharp_a(Image(basis), pattern).values.ravel()
            basis.flat[j] = 0.0
        return mat
    return _ct_asharp_matrix(pattern, n)


def _radon_sparse(cfg: RadonConfig, n, angle_indices=None):
    """Sparse matrix of radon restricted to the given angle rows."""
    step = 2.0 * FOV_HALF / n
    angles = cfg.angle_grid()
    if angle_indices is None:
        angle_indices = range(cfg.n_angles)
    dets = cfg.detector_grid(n)
    sqrt2 = math.sqrt(2.0)
    n_steps = int(math.ceil(2.0 * sqrt2 / step))
    t = -sqrt2 + (np.arange(n_steps) + 0.5) * (2.0 * sqrt2 / n_steps)
    weight = 2.0 * sqrt2 / n_steps
    inv = 1.0 / step
    rows, cols, vals = [], [], []
    for out_row, ai in enumerate(angle_indices):
        phi = angles[ai]
        c, s = math.cos(phi), math.sin(phi)
        px = dets[:, None] * c + t[None, :] * (-s)
        py = dets[:, None] * s + t[None, :] * c
        fx = (px + FOV_HALF) * inv - 0.5
        fy = (py + FOV_HALF) * inv - 0.5
        x0 = np.floor(fx).astype(np.int64)
        y0 = np.floor(fy).astype(np.int64)
        wx = fx - x0
        wy = fy - y0
        det_idx = np.broadcast_to(np.arange(dets.size)[:, None], fx.shape)
        for dx, dy, w in (
            (0, 0, (1 - wx) * (1 - wy)),
            (1, 0, wx * (1 - wy)),
            (0, 1, (1 - wx) * wy),
            (1, 1, wx * wy),
        ):
            xi = x0 + dx
            yi = y0 + dy
            ok = (xi >= 0) & (xi < n) & (yi >= 0) & (yi < n) & (w > 0)
            rows.append(out_row * dets.size + det_idx[ok])
            cols.append(yi[ok] * n + xi[ok])
            vals.append(w[ok] * weight)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    shape = (len(list(angle_indices)) * dets.size, n * n)
    return sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _ct_asharp_matrix(pattern: SamplingPattern, n):
    """Compose (backproject) o (filter) o (mask) o (radon) into one dense map."""
    s = pattern.scheme
    cfg = s.radon_cfg
    mask = SamplingPattern(s, n).mask()
    kept_angles = np.flatnonzero(mask.any(axis=1))
    R = _radon_sparse(cfg, n, kept_angles)  # (n_kept*n_det, n^2)
    n_det = cfg.resolve_detectors(n)
    dets = cfg.detector_grid(n)
    ds = dets[1] - dets[0]
    # per-row filter as a linear-convolution matrix (4x padded, restricted back)
    filt_mat = _filter_rows(np.eye(n_det), ds, FilterSpec(), pad_factor=4).T
    bp = _backproject_rows_matrix(cfg, n, kept_angles)  # (n^2, n_kept*n_det)
    out = np.zeros((n * n, n * n))
    for k, ai in enumerate(kept_angles):
        block = R[k * n_det : (k + 1) * n_det].toarray()  # (n_det, n^2)
        block *= mask[ai][:, None]  # interior masks vary per angle
        out += bp[:, k * n_det : (k + 1) * n_det] @ (filt_mat @ block)
    return out


def _backproject_rows_matrix(cfg: RadonConfig, n, angle_indices):
    angles = cfg.angle_grid()
    dets = cfg.detector_grid(n)
    ds = dets[1] - dets[0]
    s0 = dets[0]
    dphi = np.pi / cfg.n_angles
    xs = pixel_centers(n)
    x, y = np.meshgrid(xs, xs)
    rows, cols, vals = [], [], []
    pix_idx = np.arange(n * n)
    for k, ai in enumerate(angle_indices):
        phi = angles[ai]
        f = ((x * math.cos(phi) + y * math.sin(phi)) - s0) / ds
        i0 = np.clip(np.floor(f).astype(np.int64), 0, dets.size - 2)
        w = np.clip(f - i0, 0.0, 1.0).ravel()
        i0 = i0.ravel()
        base = k * dets.size
        rows.extend((pix_idx, pix_idx))
        cols.extend((base + i0, base + i0 + 1))
        vals.extend(((1.0 - w) * dphi, w * dphi))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    shape = (n * n, len(list(angle_indices)) * dets.size)
    return sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
