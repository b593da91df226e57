"""Comparison experiments: method lineup, curve projection, uncertainty demos.

Each runner returns plain result rows and optionally writes one CSV. Rows
contain only values that are pure functions of (config, seed), so a rerun
byte-reproduces the file; wall-clock timings go to the progress stream only.
"""

import csv
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import Image, make_shepp_logan
from .manifold import LatentBox, generate, make_dataset, rotate_latent
from .xform import RadonConfig, fbp, radon
from .recon import (
    TrainConfig,
    l1_sweep,
    lambda_grid,
    mlp_reconstruct,
    oracle_fit,
    pca_fit,
    pca_recon,
    train_mlp,
    tv_sweep,
)
from .sampling import SamplingPattern, asharp_a
from .util import format_float
from . import analysis


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a comparison run needs, resolved and validated."""

    pattern: SamplingPattern
    side: int
    box: LatentBox
    n_train: int = 800
    n_test: int = 100
    train_seed: int = 101
    test_seed: int = 202
    eval_count: int = 0          # 0 = the whole test set
    lams: tuple = tuple(lambda_grid())
    pca_k: int = 100
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    arch: tuple = (192, 96)
    members: int = 3
    out_dir: str = ""

    def __post_init__(self):
        if self.side < 4:
            raise ValueError("side too small")
        if self.pattern.modality == "mri" and self.side % 4:
            raise ValueError("MRI side must be divisible by 4")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("dataset counts must be positive")


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


def _write_rows(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="ascii", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else format_float(v)
                        for v in row])


def _normalized(x: Image, y: Image):
    """Unit max-abs frame of a measured image and its reference."""
    s = float(np.max(np.abs(np.real(x.values))))
    if s == 0:
        raise ValueError("measured image is identically zero")
    return Image(np.real(x.values) / s), Image(np.real(y.values) / s), s


def _mse(a, b):
    return float(np.mean(np.abs(np.asarray(a) - np.asarray(b)) ** 2))


def method_lineup(cfg: ExperimentConfig, model=None):
    """Median reconstruction MSE per method on held-out manifold samples.

    Sparse solvers see each measured image in its unit max-abs frame (the
    lambda grid is calibrated for unit-scale data); the oracle and the
    trained regressor consume the raw image and their outputs are rescaled
    into the same frame before scoring. Pass a trained model to skip the
    training stage.
    """
    t0 = time.time()
    train = make_dataset(cfg.box, cfg.n_train, cfg.pattern, cfg.train_seed,
                         cfg.side)
    test = make_dataset(cfg.box, cfg.n_test, cfg.pattern, cfg.test_seed,
                        cfg.side)
    count = cfg.eval_count or test.count
    count = min(count, test.count)
    _progress(f"datasets ready ({time.time() - t0:.0f}s)")

    if model is None:
        t0 = time.time()
        model, _ = train_mlp(train, cfg.train_cfg, arch=cfg.arch,
                             members=cfg.members)
        _progress(f"regressor trained ({time.time() - t0:.0f}s)")
    basis = pca_fit([Image(np.real(y.values)) for y in train.ys], cfg.pca_k)

    lams = np.asarray(cfg.lams, dtype=float)
    per_method = {m: [] for m in
                  ("oracle", "mlp", "tv", "l1_haar", "l1_db4", "pca")}
    sweep_errs = {m: np.zeros((count, lams.size)) for m in
                  ("tv", "l1_haar", "l1_db4")}
    t0 = time.time()
    for i in range(count):
        x, y = test.xs[i], test.ys[i]
        xn, yn, s = _normalized(x, y)
        fit = oracle_fit(x, cfg.pattern, cfg.box)
        per_method["oracle"].append(_mse(fit.image.values / s, yn.values))
        rec = mlp_reconstruct(model, x)
        per_method["mlp"].append(_mse(rec.values / s, yn.values))
        per_method["pca"].append(
            _mse(pca_recon(xn, basis, cfg.pattern).values, yn.values))
        for name, results in (
            ("tv", tv_sweep(xn, cfg.pattern, lams)),
            ("l1_haar", l1_sweep(xn, cfg.pattern, "haar", lams)),
            ("l1_db4", l1_sweep(xn, cfg.pattern, "db4", lams)),
        ):
            for j, res in enumerate(results):
                sweep_errs[name][i, j] = _mse(res.image.values, yn.values)
        if (i + 1) % 10 == 0 or i + 1 == count:
            _progress(f"evaluated {i + 1}/{count} ({time.time() - t0:.0f}s)")

    rows = []
    best_lams = {}
    for name in ("oracle", "mlp"):
        rows.append((name, "", float(np.median(per_method[name]))))
    for name in ("tv", "l1_haar", "l1_db4"):
        med = np.median(sweep_errs[name], axis=0)
        j = int(np.argmin(med))
        best_lams[name] = float(lams[j])
        per_method[name] = list(sweep_errs[name][:, j])
        rows.append((name, float(lams[j]), float(med[j])))
    rows.append(("pca", "", float(np.median(per_method["pca"]))))
    if cfg.out_dir:
        _write_rows(os.path.join(cfg.out_dir, "method_lineup.csv"),
                    ("method", "lam", "median_mse"), rows)
    return rows


# Orbit anchor with >= 0.1 box margin so small rotations stay recoverable.
CURVE_LATENT = (-0.30, 0.18, 0.32, -0.12, 0.26, 0.33, 1.2)


def curve_projection(cfg: ExperimentConfig, n_span=36, latent=CURVE_LATENT):
    """Project a half-step rotated image onto the span of a rotation orbit.

    Renders the orbit of one latent at n_span equal rotation steps and
    compares the least-squares projection of the half-step image against
    the two-neighbor average and against a per-sample model fit of the same
    image. A good linear subspace would track the curve; the projection
    landing on the chord midpoint is the failure signature. The anchor
    latent sits well inside the box so every rotated copy stays inside too.
    """
    h = np.asarray(latent, dtype=float)
    step = 2.0 * math.pi / n_span
    orbit = [generate(rotate_latent(h, k * step), cfg.side)
             for k in range(n_span)]
    target = generate(rotate_latent(h, 0.5 * step), cfg.side)

    span = np.stack([im.values.ravel() for im in orbit], axis=1)
    tvec = target.values.ravel()
    coef, *_ = np.linalg.lstsq(span, tvec, rcond=None)
    proj = span @ coef
    chord = 0.5 * (orbit[0].values + orbit[1].values).ravel()

    pc = np.corrcoef(proj, chord)[0, 1]
    proj_mse = _mse(proj, tvec)

    x = asharp_a(target, cfg.pattern)
    fit = oracle_fit(x, cfg.pattern, cfg.box)
    oracle_mse = _mse(fit.image.values.ravel(), tvec)

    rows = [("projection_vs_chord_corr", float(pc)),
            ("projection_mse", proj_mse),
            ("oracle_mse", oracle_mse),
            ("mse_ratio", proj_mse / oracle_mse if oracle_mse > 0
             else math.inf)]
    if cfg.out_dir:
        _write_rows(os.path.join(cfg.out_dir, "curve_projection.csv"),
                    ("quantity", "value"), rows)
    return dict(rows)


def uncertainty_demo(pattern: SamplingPattern, out_dir="", anomaly_row=None):
    """Pairwise distances between the aliased outputs of the shifted family.

    With plain uniform sampling all pairs collide; with one extra line the
    second component separates every pair. Rows list each unordered pair.
    """
    if pattern.modality != "mri":
        raise ValueError("the shifted-family demo needs an MRI pattern")
    n = pattern.scheme.size
    base = Image(np.zeros((n, n)))
    anomaly = analysis._band_anomaly(n)
    if anomaly_row is not None:
        values = np.roll(anomaly.values, int(anomaly_row) - n // 8, axis=0)
        anomaly = Image(values)
    rep = analysis.demo_location_uncertainty(base, anomaly, pattern)
    rows = []
    k = len(rep.outputs)
    for i in range(k):
        for j in range(i + 1, k):
            row = [f"{i}-{j}", float(rep.output_dist[i, j])]
            if rep.x2_dist is not None:
                row.append(float(rep.x2_dist[i, j]))
            rows.append(tuple(row))
    if out_dir:
        header = ("pair", "output_distance")
        if rep.x2_dist is not None:
            header = header + ("extra_component_distance",)
        _write_rows(os.path.join(out_dir, "uncertainty.csv"), header, rows)
    return rep, rows


def eta_curve(box, pattern, etas, n_train, n_test, seed=0, out_dir="",
              **kwargs):
    """Patch-width probe wrapper that persists the error curve."""
    rep = analysis.eta_probe(box, pattern, etas, n_train, n_test, seed,
                             **kwargs)
    rows = [(str(e), tr, te) for e, tr, te in
            zip(rep.etas, rep.train_mse, rep.test_mse)]
    if out_dir:
        _write_rows(os.path.join(out_dir, "eta_curve.csv"),
                    ("eta", "train_mse", "test_mse"), rows)
    return rep


def interior_scan(n=256, n_angles=720, roi_center=(0.0, 0.1), roi_radius=0.45,
                  n_chords=10, margin=0.8, out_dir=""):
    """Chord scan of the in/out split of the line reconstruction.

    Renders the head phantom, reconstructs it along chords of a disk region
    by the two routes (ramp filtering vs derivative backprojection plus
    inversion of the singular integral) and audits three things per chord:
    the split parts sum back to the profile, the out-of-region part is
    smooth (low-degree polynomial fit), and the full profile is not. Errors
    are reported relative to the image-wide sup of the reference. The chord
    half-length stays at `margin` times the in-disk maximum so the samples
    avoid the logarithmic kink of the exterior part at the boundary.
    """
    if not 0 < margin < 1:
        raise ValueError("margin must sit strictly inside (0, 1)")
    t0 = time.time()
    img = make_shepp_logan(n)
    sino = radon(img, RadonConfig(n_angles=n_angles))
    u_img = fbp(sino, n)
    sup = float(np.abs(u_img.values).max())
    dbp = analysis.dbp_reconstruct(sino, n)
    strong = np.abs(u_img.values) > 0.1
    route_err = float(np.abs(dbp.values - u_img.values)[strong].max() / sup)
    _progress(f"phantom and both routes ready ({time.time() - t0:.0f}s)")

    da = 2.0 / n
    cx, cy = roi_center
    rows = []
    for k in range(n_chords):
        theta0 = k * math.pi / n_chords
        off = 0.12 * math.sin(2.4 * k + 0.7)
        half = math.sqrt(roi_radius**2 - off**2) * margin
        m = int(half / da)
        offsets = da * np.arange(-m, m + 1)
        p0 = (cx - off * math.sin(theta0), cy + off * math.cos(theta0))
        psi_in, psi_out, u = analysis.interior_split(
            sino, (roi_center, roi_radius), theta0, (p0, offsets))
        identity_err = float(np.abs(psi_in + psi_out - u).max() / sup)
        probe_u = analysis.analyticity_probe(u, chord_id=k)
        probe_out = analysis.analyticity_probe(psi_out, chord_id=k)
        smooth_ratio = probe_u.fit_residual / max(probe_out.fit_residual,
                                                  1e-300)
        rows.append((str(k), theta0, off, str(offsets.size), identity_err,
                     probe_u.fit_residual, probe_out.fit_residual,
                     smooth_ratio))
    summary = {
        "route_err": route_err,
        "identity_worst": max(r[4] for r in rows),
        "out_fit_worst": max(r[6] for r in rows),
        "smooth_ratio_min": min(r[7] for r in rows),
        "u_sup": sup,
    }
    if out_dir:
        _write_rows(os.path.join(out_dir, "interior_chords.csv"),
                    ("chord", "theta0", "offset", "n_samples",
                     "identity_err", "u_fit_residual", "out_fit_residual",
                     "smooth_ratio"), rows)
        _write_rows(os.path.join(out_dir, "interior_summary.csv"),
                    ("quantity", "value"),
                    [(k, v) for k, v in sorted(summary.items())])
    return summary, rows
