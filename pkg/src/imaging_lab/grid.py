"""Image/sinogram/k-space containers, phantoms, patches, metrics, and file formats.

Geometry convention used everywhere: the field of view is the square [-1,1]^2,
pixel (row, col) has its sample point at the cell center, row 0 is the bottom
of the image (y = -1 + (row+0.5)*dy). Complex values are allowed; CT paths use
the real part only.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .util import format_float

FOV_HALF = 1.0  # field of view is [-1,1]^2


def _frozen_array(values, dtype=None):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_field(values, what, min_rows=2):
    if values.ndim != 2:
        raise ValueError(f"{what} must be 2-D, got shape {values.shape}")
    if values.shape[0] < min_rows or values.shape[1] < 2:
        raise ValueError(f"{what} too small, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class Image:
    """Scalar field sampled at pixel centers on [-1,1]^2, row-major."""

    values: np.ndarray

    def __post_init__(self):
        dtype = np.complex128 if np.iscomplexobj(self.values) else np.float64
        arr = _frozen_array(self.values, dtype)
        _check_field(arr, "image")
        object.__setattr__(self, "values", arr)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def is_complex(self):
        return self.values.dtype.kind == "c"

    def pixel_size(self):
        return 2.0 * FOV_HALF / self.width, 2.0 * FOV_HALF / self.height


def pixel_centers(n):
    """Coordinates of n pixel centers spanning [-1, 1]."""
    step = 2.0 * FOV_HALF / n
    return -FOV_HALF + (np.arange(n) + 0.5) * step


@dataclass(frozen=True)
class Sinogram:
    """Line-integral samples: rows are angles in [0, pi), columns detector bins."""

    angles: np.ndarray
    detector_positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ang = _frozen_array(self.angles, np.float64)
        det = _frozen_array(self.detector_positions, np.float64)
        val = _frozen_array(self.values, np.float64)
        _check_field(val, "sinogram", min_rows=1)
        if ang.ndim != 1 or det.ndim != 1:
            raise ValueError("angles and detector_positions must be 1-D")
        if val.shape != (ang.size, det.size):
            raise ValueError(
                f"sinogram shape {val.shape} does not match "
                f"{ang.size} angles x {det.size} detectors"
            )
        if ang.size and (ang[0] < 0 or ang[-1] >= np.pi):
            raise ValueError("angles must lie in [0, pi)")
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "detector_positions", det)
        object.__setattr__(self, "values", val)

    @property
    def n_angles(self):
        return self.angles.size

    @property
    def n_detectors(self):
        return self.detector_positions.size

    def detector_spacing(self):
        d = self.detector_positions
        return float(d[1] - d[0])


@dataclass(frozen=True)
class KSpaceGrid:
    """Square DFT grid; spacing is the frequency step 1/size in index units."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, np.complex128)
        _check_field(arr, "k-space grid")
        if arr.shape[0] != arr.shape[1]:
            raise ValueError("k-space grid must be square")
        object.__setattr__(self, "values", arr)

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def spacing(self):
        return 1.0 / self.size


@dataclass
class Metrics:
    mse: float
    psnr: float
    runtime_s: float = 0.0


def compute_metrics(result: Image, reference: Image, runtime_s=0.0) -> Metrics:
    """MSE and PSNR of `result` against `reference` (peak = max |reference|)."""
    if result.values.shape != reference.values.shape:
        raise ValueError("metric operands must share a grid")
    diff = result.values - reference.values
    # fsum-free fast path; the compensated-summation agreement is a test oracle
    mse = float(np.mean(np.abs(diff) ** 2))
    peak = float(np.max(np.abs(reference.values)))
    if mse == 0.0:
        psnr = math.inf
    elif peak == 0.0:
        psnr = -math.inf
    else:
        psnr = 10.0 * math.log10(peak * peak / mse)
    return Metrics(mse=mse, psnr=psnr, runtime_s=runtime_s)


def relative_l2(result, reference):
    a = np.asarray(result, dtype=complex) if np.iscomplexobj(result) else np.asarray(result)
    b = np.asarray(reference)
    denom = np.linalg.norm(b.ravel())
    if denom == 0:
        raise ValueError("reference has zero norm")
    return float(np.linalg.norm((a - b).ravel()) / denom)


# --- phantoms ---------------------------------------------------------------

# Classic 10-ellipse head phantom, skull intensity rescaled so values sit in
# [0, 1]: (x0, y0, semi_x, semi_y, angle_deg, intensity).
SHEPP_LOGAN_ELLIPSES = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.02),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.02),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.01),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.01),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.01),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.01),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.01),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.01),
)


def eval_ellipses(x, y, ellipses=SHEPP_LOGAN_ELLIPSES):
    """Sum of ellipse intensities at arbitrary points (x, y broadcastable)."""
    total = np.zeros(np.broadcast(x, y).shape)
    for (x0, y0, a, b, ang, rho) in ellipses:
        c, s = math.cos(math.radians(ang)), math.sin(math.radians(ang))
        u = (x - x0) * c + (y - y0) * s
        v = -(x - x0) * s + (y - y0) * c
        total += np.where((u / a) ** 2 + (v / b) ** 2 <= 1.0, rho, 0.0)
    return total


def make_shepp_logan(n) -> Image:
    """Standard 10-ellipse head phantom point-sampled at pixel centers."""
    if n < 2:
        raise ValueError("n must be >= 2")
    xs = pixel_centers(n)
    x, y = np.meshgrid(xs, xs)
    return Image(eval_ellipses(x, y))


def make_disk_pair(h, n) -> Image:
    """Binary indicator of two disks; h = (cx1, cy1, cx2, cy2, r1, r2, _).

    The trailing latent coordinate (intensity) is ignored here; the image is
    the plain 0/1 support used for display and patch experiments.
    """
    h = np.asarray(h, dtype=float)
    xs = pixel_centers(n)
    x, y = np.meshgrid(xs, xs)
    inside = ((x - h[0]) ** 2 + (y - h[1]) ** 2 <= h[4] ** 2) | (
        (x - h[2]) ** 2 + (y - h[3]) ** 2 <= h[5] ** 2
    )
    return Image(inside.astype(float))


# --- patches ----------------------------------------------------------------


def extract_patches(image: Image, eta):
    """Split into width/eta patches of shape (height, eta), left to right."""
    if eta < 1 or image.width % eta != 0:
        raise ValueError(f"eta={eta} must divide image width {image.width}")
    v = image.values
    return [Image(v[:, i * eta : (i + 1) * eta]) for i in range(image.width // eta)]


def concat_patches(patches):
    """Inverse of extract_patches."""
    return Image(np.concatenate([p.values for p in patches], axis=1))


# --- file formats -----------------------------------------------------------


def save_pgm(path, image: Image):
    """16-bit binary PGM of the magnitude, min-max scaled."""
    mag = np.abs(image.values)
    lo, hi = float(mag.min()), float(mag.max())
    scaled = np.zeros_like(mag) if hi == lo else (mag - lo) / (hi - lo)
    pix = np.round(scaled * 65535.0).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{image.width} {image.height}\n65535\n".encode("ascii"))
        f.write(pix.tobytes())


def _write_raw(path, values):
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(np.array([w, h], dtype="<u4").tobytes())
        if np.iscomplexobj(values):
            inter = np.empty((h, w * 2), dtype="<f8")
            inter[:, 0::2] = values.real
            inter[:, 1::2] = values.imag
            f.write(inter.tobytes())
        else:
            f.write(values.astype("<f8").tobytes())


def _read_raw(path):
    with open(path, "rb") as f:
        head = f.read(8)
        if len(head) != 8:
            raise ValueError(f"{path}: truncated header")
        w, h = np.frombuffer(head, dtype="<u4")
        body = np.frombuffer(f.read(), dtype="<f8")
    if body.size == w * h:
        return body.reshape(h, w).copy()
    if body.size == 2 * w * h:
        inter = body.reshape(h, 2 * w)
        return (inter[:, 0::2] + 1j * inter[:, 1::2]).copy()
    raise ValueError(f"{path}: payload size {body.size} does not fit {w}x{h}")


def save_image(path, image: Image):
    """Raw binary: 8-byte header (width, height as little-endian uint32) then
    row-major float64; complex images interleave real/imag per pixel."""
    _write_raw(path, image.values)


def load_image(path) -> Image:
    return Image(_read_raw(path))


def save_sinogram(path, sino: Sinogram):
    """Same raw layout as images (width = detectors, height = angles); the
    angle grid is uniform over [0, pi) and detectors uniform, so the grids
    are reconstructed from the shape alone."""
    _write_raw(path, sino.values)


def load_sinogram(path, detector_span=None) -> Sinogram:
    values = _read_raw(path)
    if np.iscomplexobj(values):
        raise ValueError("sinograms are real-valued")
    n_ang, n_det = values.shape
    span = math.sqrt(2.0) if detector_span is None else detector_span
    angles = np.arange(n_ang) * (np.pi / n_ang)
    dets = np.linspace(-span, span, n_det)
    return Sinogram(angles, dets, values)


def save_mask(path, mask):
    """Binary 0/1 mask with the same 8-byte header as raw images."""
    mask = np.asarray(mask)
    h, w = mask.shape
    with open(path, "wb") as f:
        f.write(np.array([w, h], dtype="<u4").tobytes())
        f.write(mask.astype(np.uint8).tobytes())


def load_mask(path):
    with open(path, "rb") as f:
        w, h = np.frombuffer(f.read(8), dtype="<u4")
        body = np.frombuffer(f.read(), dtype=np.uint8)
    if body.size != w * h:
        raise ValueError(f"{path}: mask payload does not fit {w}x{h}")
    return body.reshape(h, w).astype(bool)


METRICS_HEADER = "name,mse,psnr,runtime_s"


def append_metrics_csv(path, name, metrics: Metrics):
    """Append one row, writing the header if the file is new or empty."""
    need_header = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="ascii", newline="") as f:
        if need_header:
            f.write(METRICS_HEADER + "\n")
        f.write(
            f"{name},{format_float(metrics.mse)},{format_float(metrics.psnr)},"
            f"{format_float(metrics.runtime_s)}\n"
        )
