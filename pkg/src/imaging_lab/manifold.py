"""The seven-parameter solution manifold of streaked two-disk images.

A latent point h = (c1x, c1y, c2x, c2y, r1, r2, s) names two disks and a
positive intensity s. The generator filters the log-sinh-warped line
integrals of the disk union and backprojects:

    G(h) = -(1/4pi) * backproject( riesz_inv( ln(sinh(s*p)/(s*p)) ) ),

p the disk-union chord length per line. The nonlinear warp puts streak-like
structure into the image, so the family is a curved 7-dim set, not a subspace.
Line integrals are computed analytically (interval union of the two chords),
which keeps G smooth in h; rasterizing first would quantize it at pixel size.
"""

import csv
import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import config as cfgmod
from .grid import FOV_HALF, Image, load_image, save_image
from .sampling import SamplingPattern, asharp_a, asharp_a_matrix
from .util import format_float, rng_from_seed, spawn_rngs
from .xform import FilterSpec, RadonConfig, _filter_rows, backproject, Sinogram

LATENT_DIM = 7


def _check_disks_inside(h):
    for (cx, cy, r) in ((h[0], h[1], h[4]), (h[2], h[3], h[5])):
        if r <= 0:
            raise ValueError(f"disk radius {r} must be positive")
        if max(abs(cx), abs(cy)) + r >= FOV_HALF:
            raise ValueError(f"disk at ({cx},{cy}) r={r} leaves the field of view")
    if h[6] <= 0:
        raise ValueError("intensity must be positive")


@dataclass(frozen=True)
class LatentPoint:
    """h = (c1x, c1y, c2x, c2y, r1, r2, intensity)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).reshape(LATENT_DIM)
        if not np.isfinite(arr).all():
            raise ValueError("latent point has non-finite entries")
        _check_disks_inside(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def center1(self):
        return self.values[0], self.values[1]

    @property
    def center2(self):
        return self.values[2], self.values[3]

    @property
    def radii(self):
        return self.values[4], self.values[5]

    @property
    def intensity(self):
        return float(self.values[6])

    def canonical(self):
        """Order the disks lexicographically; the generated image is invariant
        under swapping (center1, r1) <-> (center2, r2)."""
        v = self.values
        if tuple(v[[2, 3, 5]]) < tuple(v[[0, 1, 4]]):
            return LatentPoint(np.array([v[2], v[3], v[0], v[1], v[5], v[4], v[6]]))
        return self


def swap_disks(h):
    """The latent involution that leaves the generated image unchanged."""
    v = np.asarray(h, dtype=float)
    return np.array([v[2], v[3], v[0], v[1], v[5], v[4], v[6]])


@dataclass(frozen=True)
class LatentBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(LATENT_DIM)
        hi = np.array(self.upper, dtype=float).reshape(LATENT_DIM)
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if not (lo < hi).all():
            raise ValueError("box lower bounds must be below upper bounds")
        if lo[4] <= 0 or lo[5] <= 0 or lo[6] <= 0:
            raise ValueError("radii and intensity must stay positive")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @staticmethod
    def default():
        """First disk on the left half, second on the right, radii in
        [0.2, 0.4], intensity in [0.5, 2].

        Every box point keeps both disks strictly inside the field of view.
        The disjoint center ranges make the canonical ordering constant over
        the box, so latent coordinates vary smoothly, and the radii stay a
        few pixels wide at the working grid sizes.
        """
        return LatentBox(
            lower=np.array([-0.55, -0.5, 0.05, -0.5, 0.2, 0.2, 0.5]),
            upper=np.array([-0.05, 0.5, 0.55, 0.5, 0.4, 0.4, 2.0]),
        )

    def contains(self, h):
        v = np.asarray(h, dtype=float)
        return bool((v >= self.lower - 1e-12).all() and (v <= self.upper + 1e-12).all())

    def clamp(self, h):
        return np.clip(np.asarray(h, dtype=float), self.lower, self.upper)


def log_sinh_ratio(t):
    """ln(sinh(t)/t) for t >= 0, elementwise, stable across the whole range.

    Series t^2/6 - t^4/180 below 1e-3; below 1, log1p of the Taylor series of
    sinh(t)/t - 1 (the direct quotient loses ~6 digits there); direct formula
    up to 20; t - ln(2t) + ln1p(-exp(-2t)) beyond (sinh overflows near 710).
    """
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ValueError("log_sinh_ratio needs t >= 0")
    out = np.empty_like(t)
    small = t < 1e-3
    lowmid = ~small & (t < 1.0)
    large = t > 20.0
    mid = ~small & ~lowmid & ~large
    ts = t[small]
    out[small] = ts * ts / 6.0 - ts**4 / 180.0
    # sinh(t)/t - 1 = sum t^(2k)/(2k+1)!, Horner in t^2; k to 8 caps the
    # truncation at ~1e-17 relative on [0, 1)
    u = t[lowmid] ** 2
    series = u / 6.0
    acc = np.ones_like(u)
    for denom in (272.0, 210.0, 156.0, 110.0, 72.0, 42.0, 20.0):
        acc = 1.0 + u / denom * acc
    out[lowmid] = np.log1p(series * acc)
    tm = t[mid]
    out[mid] = np.log(np.sinh(tm) / tm)
    tl = t[large]
    out[large] = tl - np.log(2.0 * tl) + np.log1p(-np.exp(-2.0 * tl))
    return out if out.ndim else float(out)


def disk_pair_sinogram(h, angles, detectors):
    """Exact line integrals of the union-of-two-disks indicator.

    Per line, each disk contributes a chord interval along the line; the
    integral is the length of the interval union (overlap counted once).
    """
    h = np.asarray(h, dtype=float)
    angles = np.asarray(angles)
    dets = np.asarray(detectors)
    cos, sin = np.cos(angles)[:, None], np.sin(angles)[:, None]
    out_lo, out_hi, halves = [], [], []
    for (cx, cy, r) in ((h[0], h[1], h[4]), (h[2], h[3], h[5])):
        d = dets[None, :] - (cx * cos + cy * sin)
        half = np.sqrt(np.maximum(r * r - d * d, 0.0))
        t_mid = -cx * sin + cy * cos
        out_lo.append(t_mid - half)
        out_hi.append(t_mid + half)
        halves.append(half)
    overlap = np.maximum(
        np.minimum(out_hi[0], out_hi[1]) - np.maximum(out_lo[0], out_lo[1]), 0.0
    )
    overlap *= (halves[0] > 0) & (halves[1] > 0)
    return 2.0 * halves[0] + 2.0 * halves[1] - overlap


GENERATOR_SCALE = -1.0 / (4.0 * math.pi)


@lru_cache(maxsize=4)
def _generator_kernel(n, cfg: RadonConfig):
    """Cached per (side, radon config): the circular Riesz filter matrix and,
    on small grids, a sparse backprojection operator."""
    from .sampling import _backproject_rows_matrix

    dets = cfg.detector_grid(n)
    ds = dets[1] - dets[0]
    filt = _filter_rows(np.eye(dets.size), ds, FilterSpec(), pad_factor=1).T
    bp = None
    if n <= 96:
        bp = _backproject_rows_matrix(cfg, n, range(cfg.n_angles))
    return filt, bp


def generate(h, n, cfg: RadonConfig | None = None) -> Image:
    """G(h) on an n x n grid. cfg defaults to 360 angles, 1.5n detectors."""
    if isinstance(h, LatentPoint):
        hv = h.values
    else:
        hv = np.asarray(h, dtype=float).reshape(LATENT_DIM)
        _check_disks_inside(hv)
    if cfg is None:
        cfg = RadonConfig(n_angles=360)
    angles = cfg.angle_grid()
    dets = cfg.detector_grid(n)
    chords = disk_pair_sinogram(hv, angles, dets)
    warped = log_sinh_ratio(hv[6] * chords)
    filt, bp = _generator_kernel(n, cfg)
    filtered = warped @ filt.T
    if bp is not None:
        img = (bp @ filtered.ravel()).reshape(n, n)
    else:
        img = backproject(Sinogram(angles, dets, filtered), n).values
    return Image(GENERATOR_SCALE * img)


def rotate_latent(h, theta):
    """Rotate both disk centers about the origin; radii/intensity unchanged."""
    hv = h.values if isinstance(h, LatentPoint) else np.asarray(h, dtype=float)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array(
        [
            c * hv[0] - s * hv[1],
            s * hv[0] + c * hv[1],
            c * hv[2] - s * hv[3],
            s * hv[2] + c * hv[3],
            hv[4],
            hv[5],
            hv[6],
        ]
    )
    return LatentPoint(rot)


def sample_latent(box: LatentBox, rng, max_tries=1000) -> LatentPoint:
    """Uniform over the box, rejecting draws whose disks leave the FOV."""
    rng = rng_from_seed(rng)
    for _ in range(max_tries):
        draw = rng.uniform(box.lower, box.upper)
        try:
            return LatentPoint(draw)
        except ValueError:
            continue
    raise ValueError("could not draw a valid latent point from the box")


@dataclass
class Dataset:
    """Paired (x, y, h) samples under one pattern; x = A#A y by construction."""

    hs: np.ndarray  # (count, 7)
    ys: list
    xs: list
    pattern: SamplingPattern
    seed: int
    side: int
    box: LatentBox

    @property
    def count(self):
        return self.hs.shape[0]


def make_dataset(box: LatentBox, count, pattern: SamplingPattern, seed, side,
                 gen_cfg: RadonConfig | None = None) -> Dataset:
    """Synthesize a dataset; per-sample RNG streams split from the seed, so
    any prefix of the dataset is stable under count changes."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rngs = spawn_rngs(seed, count)
    mat = None
    if pattern.modality == "ct" and side <= 96:
        mat = cached_operator(pattern, side)
    hs = np.empty((count, LATENT_DIM))
    ys, xs = [], []
    for i in range(count):
        h = sample_latent(box, rngs[i])
        y = generate(h, side, gen_cfg)
        if mat is not None:
            x = Image((mat @ y.values.ravel()).reshape(side, side))
        else:
            x = asharp_a(y, pattern)
        hs[i] = h.values
        ys.append(y)
        xs.append(x)
    return Dataset(hs=hs, ys=ys, xs=xs, pattern=pattern, seed=int(seed),
                   side=side, box=box)


@lru_cache(maxsize=6)
def cached_operator(pattern: SamplingPattern, side):
    """Dense A#A matrix, cached; the workhorse for solvers and experiments."""
    return asharp_a_matrix(pattern, side)


# --- dataset directory layout -------------------------------------------------


def save_dataset(dirpath, ds: Dataset):
    os.makedirs(dirpath, exist_ok=True)
    manifest = {
        "dataset": {
            "count": ds.count,
            "seed": ds.seed,
            "side": ds.side,
            "box_lower": ",".join(format_float(v) for v in ds.box.lower),
            "box_upper": ",".join(format_float(v) for v in ds.box.upper),
        },
        "pattern": cfgmod.pattern_to_section(ds.pattern),
    }
    cfgmod.write_config(os.path.join(dirpath, "manifest.cfg"), manifest)
    with open(os.path.join(dirpath, "latent.csv"), "w", encoding="ascii",
              newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"h{i}" for i in range(1, LATENT_DIM + 1)])
        for row in ds.hs:
            writer.writerow([format_float(v) for v in row])
    for i in range(ds.count):
        save_image(os.path.join(dirpath, f"y_{i:05d}.img"), ds.ys[i])
        save_image(os.path.join(dirpath, f"x_{i:05d}.img"), ds.xs[i])


def load_dataset(dirpath) -> Dataset:
    manifest = cfgmod.read_config(os.path.join(dirpath, "manifest.cfg"))
    try:
        meta = manifest["dataset"]
        count = int(meta["count"])
        side = int(meta["side"])
        seed = int(meta["seed"])
        box = LatentBox(
            np.array([float(v) for v in meta["box_lower"].split(",")]),
            np.array([float(v) for v in meta["box_upper"].split(",")]),
        )
        pattern = cfgmod.pattern_from_section(manifest["pattern"])
    except KeyError as e:
        raise cfgmod.ConfigError(f"dataset manifest missing {e}") from e
    hs = np.loadtxt(os.path.join(dirpath, "latent.csv"), delimiter=",",
                    skiprows=1).reshape(count, LATENT_DIM)
    ys = [load_image(os.path.join(dirpath, f"y_{i:05d}.img")) for i in range(count)]
    xs = [load_image(os.path.join(dirpath, f"x_{i:05d}.img")) for i in range(count)]
    return Dataset(hs=hs, ys=ys, xs=xs, pattern=pattern, seed=seed, side=side,
                   box=box)
