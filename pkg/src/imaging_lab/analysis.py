"""Empirical checks behind the recovery claims.

Restricted-isometry ratio scans, pairwise injectivity sweeps, nonlinearity of
the aliasing inverse, the fold-shift ambiguity demo, the interior-tomography
chord split, and the patch-width probe. Everything here reports numbers; the
test suite and the CLI decide what counts as a pass.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Image, Sinogram, pixel_centers
from .manifold import LATENT_DIM, LatentBox, generate, make_dataset, sample_latent
from .recon.mlp import _Job
from .recon.oracle import oracle_fit
from .sampling import (
    MriUniform,
    MriUniformPlus,
    SamplingPattern,
    asharp_a,
    decompose_x1_x2,
    subsample,
    zero_fill,
)
from .xform import FilterSpec, _filter_rows, backproject, dft2, hilbert_line, radon


# --- measurement ratios -------------------------------------------------------


def forward_measurements(image: Image, pattern: SamplingPattern):
    """A y in canonical order: transform to the measurement grid, subsample."""
    if pattern.modality == "mri":
        return subsample(dft2(image), pattern)
    return subsample(radon(image, pattern.scheme.radon_cfg), pattern)


@dataclass(frozen=True)
class RipEstimate:
    """Extremes of ||Ay - Ay'|| / ||y - y'|| over sampled pairs.

    c_lower is the largest lower-frame constant the scan validates; it drops
    to zero once any pair lands in the null space.
    """

    c_lower: float
    min_ratio: float
    max_ratio: float
    n_pairs: int
    witness: tuple

    def __post_init__(self):
        if not 0.0 <= self.min_ratio <= self.max_ratio:
            raise ValueError("ratio extremes out of order")
        if self.c_lower > self.min_ratio + 1e-15:
            raise ValueError("validated constant exceeds the observed minimum")


def _band_anomaly(n):
    """A small disk confined to the first quarter-height band."""
    cols = np.arange(n)
    rows = cols[:, None]
    r = max(n // 16, 2)
    blob = ((rows - n // 8) ** 2 + (cols[None, :] - n // 2) ** 2 < r * r)
    return Image(blob.astype(float))


def shifted_family(base: Image, anomaly: Image):
    """base plus the anomaly at each quarter-height offset."""
    n = base.height
    if n % 4:
        raise ValueError("height must be divisible by 4")
    return [
        Image(base.values + np.roll(anomaly.values, beta * (n // 4), axis=0))
        for beta in range(4)
    ]


def estimate_rip(pattern: SamplingPattern, sampler, n_pairs, seed=0,
                 adversarial: bool = True) -> RipEstimate:
    """Scan measurement-to-image distance ratios over random pairs.

    sampler: callable(rng) -> Image. For MRI patterns the scan also injects
    the deterministic fold-shift family, whose differences are exactly the
    directions a uniform pattern cannot see.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        y = sampler(rng)
        for _ in range(100):
            y2 = sampler(rng)
            if np.linalg.norm((y.values - y2.values).ravel()) > 1e-12:
                break
        else:
            raise RuntimeError("sampler keeps returning the same image")
        pairs.append((y, y2))
    if adversarial and pattern.modality == "mri":
        base = sampler(rng)
        family = shifted_family(base, _band_anomaly(base.height))
        for i in range(4):
            for j in range(i + 1, 4):
                pairs.append((family[i], family[j]))

    min_ratio = math.inf
    max_ratio = 0.0
    witness = (pairs[0][0], pairs[0][1])
    for y, y2 in pairs:
        gap = np.linalg.norm((y.values - y2.values).ravel())
        meas = np.linalg.norm(
            forward_measurements(y, pattern) - forward_measurements(y2, pattern)
        )
        ratio = meas / gap
        if ratio < min_ratio:
            min_ratio = ratio
            witness = (y, y2)
        max_ratio = max(max_ratio, ratio)
    c_lower = 0.0 if min_ratio < 1e-8 else float(min_ratio)
    return RipEstimate(c_lower=c_lower, min_ratio=float(min_ratio),
                       max_ratio=float(max_ratio), n_pairs=len(pairs),
                       witness=witness)


@dataclass(frozen=True)
class InjectivityReport:
    n_samples: int
    n_pairs: int
    tol: float
    violations: tuple
    max_isometry_dev: float

    @property
    def passed(self):
        return not self.violations


def check_injectivity(pattern: SamplingPattern, samples, tol=1e-6) -> InjectivityReport:
    """All-pairs test that A#A separates the given images.

    Flags pairs with ||A#A (y - y')|| <= tol * ||y - y'||. Also measures how
    far zero-filling is from preserving the measurement norm, which should be
    exact: padding with zeros cannot change an l2 norm.
    """
    if len(samples) < 2:
        return InjectivityReport(len(samples), 0, tol, (), 0.0)
    outs = [asharp_a(y, pattern).values.ravel() for y in samples]
    meas = [forward_measurements(y, pattern) for y in samples]
    violations = []
    dev = 0.0
    n_pairs = 0
    for i in range(len(samples)):
        for j in range(i + 1, len(samples)):
            gap = np.linalg.norm((samples[i].values - samples[j].values).ravel())
            if gap < 1e-14:
                continue
            n_pairs += 1
            ratio = np.linalg.norm(outs[i] - outs[j]) / gap
            if ratio <= tol:
                violations.append((i, j, float(ratio)))
            md = meas[i] - meas[j]
            mn = np.linalg.norm(md)
            if mn > 1e-14:
                filled = np.linalg.norm(zero_fill(md, pattern).ravel())
                dev = max(dev, abs(filled - mn) / mn)
    return InjectivityReport(len(samples), n_pairs, tol, tuple(violations),
                             float(dev))


# --- nonlinearity of the aliasing inverse --------------------------------------


@dataclass(frozen=True)
class NonlinearityReport:
    n_train: int
    n_test: int
    affine_train_mse: float
    affine_test_mse: float
    oracle_mse: float
    ratio: float
    gain: float
    verdict: str
    note: str = ""


def _pool32(image: Image):
    """Real part block-averaged to a 32x32 grid."""
    v = np.real(image.values).astype(float)
    n = v.shape[0]
    if n % 32:
        raise ValueError(f"side {n} is not a multiple of 32")
    f = n // 32
    return v.reshape(32, f, 32, f).mean(axis=(1, 3))


def test_nonlinearity(ds, holdout=0.5, oracle_subset=10,
                      ridge=1e-8) -> NonlinearityReport:
    """Fit the best affine map from aliased inputs to clean images.

    Inputs are pooled to 32x32 to keep the normal system tractable. The fit
    is compared on held-out samples against per-sample model fits; a large
    gap is the evidence that no affine reconstruction exists. Since a few
    model fits may stall in a local basin, oracle_mse is the median over the
    probed subset. `gain` is the mean projection of predictions onto the true
    images; an exactly linear dataset should give gain 1 and tiny test error.
    """
    if ds.count < 50:
        raise ValueError("dataset too small for a meaningful fit")
    n_test = max(1, int(round(ds.count * holdout)))
    n_train = ds.count - n_test
    feats = np.stack([_pool32(x).ravel() for x in ds.xs])
    targets = np.stack([np.real(y.values).ravel() for y in ds.ys])
    F = np.hstack([feats, np.ones((ds.count, 1))])
    Ftr, Fte = F[:n_train], F[n_train:]
    Ttr, Tte = targets[:n_train], targets[n_train:]

    gram = Ftr.T @ Ftr
    note = ""
    try:
        coef = np.linalg.solve(gram, Ftr.T @ Ttr)
        if not np.all(np.isfinite(coef)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        coef = None
    if coef is None or np.linalg.cond(gram) > 1e12:
        gram = gram + ridge * np.eye(gram.shape[0])
        coef = np.linalg.solve(gram, Ftr.T @ Ttr)
        note = f"ridge fallback (weight {ridge:g})"

    train_mse = float(np.mean((Ftr @ coef - Ttr) ** 2))
    pred = Fte @ coef
    test_mse = float(np.mean((pred - Tte) ** 2))
    energy = np.sum(Tte * Tte, axis=1)
    ok = energy > 0
    gain = float(np.mean(np.sum(pred[ok] * Tte[ok], axis=1) / energy[ok]))

    k = min(oracle_subset, n_test)
    if k > 0:
        errs = []
        for i in range(n_train, n_train + k):
            fit = oracle_fit(ds.xs[i], ds.pattern, ds.box)
            errs.append(np.mean((fit.image.values
                                 - np.real(ds.ys[i].values)) ** 2))
        oracle_mse = float(np.median(errs))
    else:
        oracle_mse = math.nan
    ratio = test_mse / oracle_mse if oracle_mse > 0 else math.inf
    verdict = "nonlinear" if ratio >= 10.0 else "inconclusive"
    return NonlinearityReport(n_train=n_train, n_test=n_test,
                              affine_train_mse=train_mse,
                              affine_test_mse=test_mse,
                              oracle_mse=oracle_mse, ratio=float(ratio),
                              gain=gain, verdict=verdict, note=note)


@dataclass(frozen=True)
class DimensionProbe:
    rank: int
    n_rows: int
    m: int

    @property
    def exceeds(self):
        return self.rank > self.m


def dimension_probe(box: LatentBox, pattern: SamplingPattern, side=32,
                    n_base=20, delta=1e-3, seed=0) -> DimensionProbe:
    """Numeric rank of stacked generator differences vs measurement count.

    Perturbs each latent coordinate at n_base random base points; when the
    difference directions outnumber the measurements, no linear map can
    invert the sampling on the model set.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_base):
        h = sample_latent(box, rng).values
        ref = generate(h, side).values.ravel()
        for j in range(LATENT_DIM):
            hp = h.copy()
            hp[j] += delta
            rows.append(generate(hp, side).values.ravel() - ref)
    mat = np.stack(rows)
    rank = int(np.linalg.matrix_rank(mat))
    return DimensionProbe(rank=rank, n_rows=mat.shape[0],
                          m=pattern.measurement_count())


# --- fold-shift ambiguity -------------------------------------------------------


@dataclass(frozen=True)
class LocationReport:
    outputs: list
    output_dist: np.ndarray
    x1_dist: object = None
    x2_dist: object = None

    @property
    def max_output_dist(self):
        return float(self.output_dist.max())

    @property
    def min_offdiag_x2(self):
        if self.x2_dist is None:
            return None
        d = self.x2_dist + np.diag([np.inf] * self.x2_dist.shape[0])
        return float(d.min())


def demo_location_uncertainty(base: Image, anomaly: Image,
                              pattern: SamplingPattern) -> LocationReport:
    """Where does an anomaly sit? Shift it by quarter heights and compare.

    Under plain uniform-4 sampling all four variants produce one output; the
    extra-line pattern separates them through the x2 term.
    """
    n = base.height
    nz = np.nonzero(np.abs(anomaly.values).sum(axis=1) > 0)[0]
    if nz.size and nz.max() - nz.min() + 1 > n // 4:
        raise ValueError("anomaly support exceeds one quarter-height band")
    family = shifted_family(base, anomaly)
    outputs = [asharp_a(y, pattern) for y in family]
    k = len(outputs)
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            dist[i, j] = np.linalg.norm(
                (outputs[i].values - outputs[j].values).ravel()
            )
    x1d = x2d = None
    if isinstance(pattern.scheme, MriUniformPlus):
        parts = [decompose_x1_x2(y, pattern) for y in family]
        x1d = np.zeros((k, k))
        x2d = np.zeros((k, k))
        for i in range(k):
            for j in range(k):
                x1d[i, j] = np.linalg.norm(
                    (parts[i][0].values - parts[j][0].values).ravel()
                )
                x2d[i, j] = np.linalg.norm(
                    (parts[i][1].values - parts[j][1].values).ravel()
                )
    return LocationReport(outputs=outputs, output_dist=dist,
                          x1_dist=x1d, x2_dist=x2d)


# --- interior tomography ---------------------------------------------------------


def _derivative_rows(values, spacing, pad_factor=4):
    """Detector-direction derivative of each row, computed spectrally.

    A centered difference would damp the upper frequency band (its transfer
    function is sin(2 pi nu h)/h), which the identity checks cannot afford;
    the multiplier 2i pi nu keeps the full band.
    """
    rows = np.atleast_2d(values)
    m = rows.shape[1]
    size = pad_factor * m
    freqs = np.fft.fftfreq(size, d=spacing)
    spec = np.fft.fft(rows, n=size, axis=1)
    spec *= 2j * np.pi * freqs
    return np.fft.ifft(spec, axis=1)[:, :m].real


def _rows_at_points(rows, angles, dets, px, py, signs=None):
    """Angular sum of row values interpolated at each point's offset.

    Rays outside the detector span contribute zero; the sampled function
    vanishes there.
    """
    ds = dets[1] - dets[0]
    out = np.zeros_like(px, dtype=float)
    for i, phi in enumerate(angles):
        s = px * np.cos(phi) + py * np.sin(phi)
        f = (s - dets[0]) / ds
        ok = (f >= 0.0) & (f <= dets.size - 1)
        i0 = np.clip(np.floor(f).astype(int), 0, dets.size - 2)
        w = np.clip(f - i0, 0.0, 1.0)
        row = rows[i]
        v = np.where(ok, (1 - w) * row[i0] + w * row[i0 + 1], 0.0)
        out += v if signs is None else signs[i] * v
    return out * (np.pi / len(angles))


def dbp_reconstruct(sino: Sinogram, n) -> Image:
    """Backproject the per-row Hilbert transform of the detector derivative.

    Equals filtered backprojection up to quadrature: the two row multipliers
    compose to the ramp, 2i pi nu times -i sign(nu) = 2 pi |nu|. The 1/(2 pi)
    brings the angular sum back to image units.
    """
    ds = sino.detector_positions[1] - sino.detector_positions[0]
    deriv = _derivative_rows(sino.values, ds)
    rows = np.stack([hilbert_line(deriv[i], ds) for i in range(len(sino.angles))])
    out = backproject(Sinogram(sino.angles, sino.detector_positions, rows), n)
    return Image(out.values / (2.0 * np.pi))


def interior_split(sino: Sinogram, roi, theta0, chord, ext=8.0):
    """Split the line reconstruction into in-region and out-of-region parts.

    roi: (center, radius) disk. chord: (point, offsets) with uniformly spaced
    offsets a; the sample locations are point + a * (cos theta0, sin theta0)
    and must lie inside the disk. Returns (psi_in, psi_out, u) on the chord,
    where u comes from ramp-filtered backprojection of the same sinogram and
    psi_in + psi_out is the directional-Hilbert inversion, split where the
    line crosses the region boundary.

    The singular kernel is handled by symmetric one-bin exclusion on a grid
    that extends the chord's own spacing out to |a| = ext, plus closed-form
    tails for the far field, where the transform decays like (line mass)/a.
    """
    (cx, cy), radius = roi
    p0, offsets = chord
    p0 = np.asarray(p0, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if offsets.ndim != 1 or offsets.size < 2:
        raise ValueError("chord needs at least two offsets")
    steps = np.diff(offsets)
    da = float(steps[0])
    if da <= 0 or not np.allclose(steps, da, rtol=0, atol=1e-9 * abs(da)):
        raise ValueError("chord offsets must be uniformly spaced ascending")
    e = np.array([math.cos(theta0), math.sin(theta0)])
    pts = p0[None, :] + offsets[:, None] * e[None, :]
    if np.any((pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 >= radius**2):
        raise ValueError("chord outside ROI")

    n_lo = max(int(math.ceil((offsets[0] + ext) / da)), 1)
    n_hi = max(int(math.ceil((ext - offsets[-1]) / da)), 1)
    nodes = np.concatenate([
        offsets[0] + da * np.arange(-n_lo, 0),
        offsets,
        offsets[-1] + da * np.arange(1, n_hi + 1),
    ])
    px = p0[0] + nodes * e[0]
    py = p0[1] + nodes * e[1]

    ds = sino.detector_positions[1] - sino.detector_positions[0]
    deriv = _derivative_rows(sino.values, ds)
    phi0 = theta0 + np.pi / 2.0
    signs = np.where(
        np.mod(sino.angles - phi0 + 1e-12, 2.0 * np.pi) < np.pi, 1.0, -1.0
    )
    g = _rows_at_points(deriv, sino.angles, sino.detector_positions, px, py, signs)

    filtered = _filter_rows(sino.values, ds, FilterSpec(), pad_factor=4)
    u = _rows_at_points(filtered, sino.angles, sino.detector_positions,
                        pts[:, 0], pts[:, 1])

    inside = (px - cx) ** 2 + (py - cy) ** 2 < radius**2
    diff = offsets[:, None] - nodes[None, :]
    kern = np.where(np.abs(diff) > da / 2.0, 1.0 / np.where(diff == 0, 1.0, diff), 0.0)
    scale = -da / (2.0 * np.pi**2)
    psi_in = scale * (kern[:, inside] @ g[inside])
    psi_out = scale * (kern[:, ~inside] @ g[~inside])

    span_p = float(nodes[-1])
    span_m = float(-nodes[0])
    kp = g[-1] * span_p
    km = g[0] * nodes[0]
    safe = np.where(np.abs(offsets) < 1e-12, 1.0, offsets)
    tail = np.where(
        np.abs(offsets) < 1e-12,
        -kp / span_p - km / span_m,
        -(kp / safe) * np.log(span_p / (span_p - safe))
        + (km / safe) * np.log(span_m / (span_m + safe)),
    )
    psi_out = psi_out + (-1.0 / (2.0 * np.pi**2)) * tail
    return psi_in, psi_out, u


@dataclass(frozen=True)
class AnalyticityReport:
    chord_id: int
    degree: int
    n_samples: int
    fit_residual: float
    extrapolation_residual: float

    def __post_init__(self):
        if self.fit_residual < 0 or self.extrapolation_residual < 0:
            raise ValueError("residuals cannot be negative")


def analyticity_probe(values, degree=4, chord_id=0) -> AnalyticityReport:
    """How well does a low-degree polynomial carry the chord values?

    Reports the relative residual of a least-squares fit over the full chord
    and of an extrapolation fitted on the middle third only. Smooth chords
    extrapolate; chords crossing jumps do not.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 16:
        raise ValueError("need at least 16 chord samples")
    t = np.linspace(-1.0, 1.0, values.size)
    norm = np.linalg.norm(values)
    if norm == 0:
        return AnalyticityReport(chord_id, degree, values.size, 0.0, 0.0)
    fit = np.polynomial.Polynomial.fit(t, values, degree)
    fit_res = float(np.linalg.norm(values - fit(t)) / norm)
    third = values.size // 3
    mid = slice(third, values.size - third)
    mid_fit = np.polynomial.Polynomial.fit(t[mid], values[mid], degree)
    ext_res = float(np.linalg.norm(values - mid_fit(t)) / norm)
    return AnalyticityReport(chord_id=chord_id, degree=degree,
                             n_samples=values.size, fit_residual=fit_res,
                             extrapolation_residual=ext_res)


# --- patch-width probe -----------------------------------------------------------


@dataclass(frozen=True)
class EtaProbeReport:
    etas: tuple
    test_mse: tuple
    train_mse: tuple
    n_train: int
    n_test: int

    @property
    def non_increasing(self):
        return all(b <= a for a, b in zip(self.test_mse, self.test_mse[1:]))


def _patch_rows(images, eta):
    """Width-eta column blocks of each 32x32 pooled image, flattened."""
    rows = []
    for img in images:
        v = _pool32(img)
        for k in range(32 // eta):
            rows.append(v[:, k * eta : (k + 1) * eta].ravel())
    return np.stack(rows)


def eta_probe(box: LatentBox, pattern: SamplingPattern, etas, n_train, n_test,
              seed=0, hidden=192, steps=12000, batch_size=64,
              learning_rate=1e-3) -> EtaProbeReport:
    """Patch-to-patch regression error as a function of patch width.

    For each width eta, aliased and clean images are pooled to 32x32, split
    into width-eta column blocks, and a one-hidden-layer network maps aliased
    blocks to clean blocks. Every width gets the same number of gradient
    steps (epochs would hand narrow patches a 32x larger update budget and
    bury the width effect under optimization noise). When the measurement
    couples columns, a narrow block cannot explain the cross-column leakage
    it contains, so its error floor sits above the wide-block floor and the
    test error should not increase with eta.
    """
    etas = tuple(int(e) for e in etas)
    for e in etas:
        if e < 1 or 32 % e:
            raise ValueError(f"eta={e} must divide the pooled width 32")
    side = pattern.scheme.size if pattern.modality == "mri" else pattern.image_side
    train = make_dataset(box, n_train, pattern, seed, side)
    test = make_dataset(box, n_test, pattern, seed + 1, side)
    test_mse = []
    train_mse = []
    for eta in etas:
        Xtr = _patch_rows(train.xs, eta)
        Ttr = _patch_rows(train.ys, eta)
        Xte = _patch_rows(test.xs, eta)
        Tte = _patch_rows(test.ys, eta)
        rng = np.random.default_rng(seed + 17)
        job = _Job(rng, Xtr, Ttr, (hidden,))
        count = Xtr.shape[0]
        done = 0
        while done < steps:
            order = rng.permutation(count)
            for lo in range(0, count, batch_size):
                job.update(order[lo : lo + batch_size], learning_rate)
                done += 1
                if done >= steps:
                    break
        net = job.net()
        train_mse.append(float(np.mean((net(Xtr) - Ttr) ** 2)))
        test_mse.append(float(np.mean((net(Xte) - Tte) ** 2)))
    return EtaProbeReport(etas=etas, test_mse=tuple(test_mse),
                          train_mse=tuple(train_mse),
                          n_train=n_train, n_test=n_test)
