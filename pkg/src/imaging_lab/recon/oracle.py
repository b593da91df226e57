"""Manifold-constrained reconstruction by direct latent search."""

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from ..grid import Image, pixel_centers
from ..manifold import LatentBox, LatentPoint, cached_operator, generate
from ..util import ordered_map
from ..xform import RadonConfig


@dataclass(frozen=True)
class OracleFit:
    """Best latent found, its generated image, and search diagnostics.

    Unpacks as the (latent, image) pair; `converged` is False when no start
    pushed the relative residual below the requested tolerance.
    """

    h: LatentPoint
    image: Image
    objective: float
    converged: bool
    n_evals: int

    def __iter__(self):
        return iter((self.h, self.image))


def _objective_fn(x: Image, pattern, box: LatentBox, cfg):
    side = x.height
    op = cached_operator(pattern, side)
    xv = x.values.ravel()
    span = float(np.max(box.upper - box.lower))
    penalty_scale = max(float(np.vdot(xv, xv).real), 1.0) / span**2

    def objective(raw):
        inside = box.clamp(raw)
        try:
            img = generate(LatentPoint(inside), side, cfg)
        except ValueError:  # box corner outside the field of view
            return 4.0 * penalty_scale * span**2
        resid = op @ img.values.ravel() - xv
        value = float(np.vdot(resid, resid).real)
        slack = raw - inside
        return value + penalty_scale * float(slack @ slack)

    return objective


def _informed_start(x: Image, box: LatentBox):
    """Guess the two disk centers from the brightest blobs of |x|.

    The measured image is a streaked rendition of the truth, but its two
    dominant blobs still sit near the disks; radii and intensity start at the
    box midpoint and are left to the search.
    """
    mag = np.abs(x.values.astype(complex)).real
    n = x.height
    centers = pixel_centers(n)
    mid = 0.5 * (box.lower + box.upper)
    guess = mid.copy()
    work = mag.copy()
    gx, gy = np.meshgrid(centers, centers)
    for slot in (0, 2):
        b, a = np.unravel_index(int(np.argmax(work)), work.shape)
        cx, cy = centers[a], centers[b]
        guess[slot] = cx
        guess[slot + 1] = cy
        work[(gx - cx) ** 2 + (gy - cy) ** 2 < 0.3**2] = -np.inf
    return box.clamp(guess)


def _latin_starts(box: LatentBox, count, seed):
    sampler = qmc.LatinHypercube(d=box.lower.size, seed=seed)
    unit = sampler.random(count)
    return box.lower + unit * (box.upper - box.lower)


def _tune_intensity(objective, start, box: LatentBox, count=5):
    """1-D scan over the intensity slot; amplitude mismatch dominates the
    objective when the geometry guess is roughly right."""
    values = np.geomspace(box.lower[6], box.upper[6], count)
    trials = np.repeat(start[None, :], count, axis=0)
    trials[:, 6] = values
    scores = [objective(t) for t in trials]
    return trials[int(np.argmin(scores))], count


def _polish(objective, start, maxfev, xatol, fatol):
    return optimize.minimize(
        objective, start, method="Nelder-Mead",
        options={"maxfev": maxfev, "xatol": xatol, "fatol": fatol,
                 "adaptive": True})


def oracle_fit(x: Image, pattern, box: LatentBox | None = None,
               cfg: RadonConfig | None = None, n_starts=16, tol=1e-5,
               coarse_evals=300, fine_evals=2500, fine_tries=None,
               seed=0) -> OracleFit:
    """Minimize ||A#A G(h) - x||^2 over the latent box by multi-start search.

    One start is read off the measured image (with a quick intensity scan),
    the rest fill the box by Latin hypercube. Starts are ranked by initial
    objective; the best third plus the informed start get a short
    Nelder-Mead polish, then the coarse results are refined best-first until
    one drives the relative residual below `tol`. fine_tries caps how many
    coarse candidates may be refined (default: all of them). Out-of-box
    proposals are clamped and pay a quadratic penalty, so the returned point
    always lands inside the box. Ties break toward the lexicographically
    smaller canonical latent.
    """
    if box is None:
        box = LatentBox.default()
    objective = _objective_fn(x, pattern, box, cfg)
    threshold = tol * tol * max(float(np.vdot(x.values, x.values).real), 1e-300)
    fatol = max(1e-18, 1e-4 * threshold)

    informed, scan_evals = _tune_intensity(objective, _informed_start(x, box), box)
    starts = np.vstack([informed, _latin_starts(box, max(n_starts - 1, 1), seed)])
    initial = [objective(s) for s in starts]
    ranked = sorted(range(len(starts)), key=lambda i: initial[i])
    evals = len(starts) + scan_evals

    # the informed start always reaches the coarse stage, whatever its rank
    keep = max(2, len(starts) // 3)
    picks = list(dict.fromkeys([0] + ranked[:keep]))[:keep + 1]
    coarse = []
    for group in _batches([starts[i] for i in picks], 3):
        coarse.extend(ordered_map(
            lambda s: _polish(objective, s, coarse_evals, 1e-3, fatol), group))
    evals += sum(r.nfev for r in coarse)
    coarse.sort(key=lambda r: r.fun)

    # refine the most promising basins first, stopping at the first run that
    # meets the tolerance
    cap = len(coarse) if fine_tries is None else min(fine_tries, len(coarse))
    best = None
    for seed_res in coarse[:cap]:
        res = _polish(objective, seed_res.x, fine_evals, 1e-6, fatol)
        evals += res.nfev
        h = LatentPoint(box.clamp(res.x)).canonical()
        key = (float(res.fun), tuple(h.values))
        if best is None or key < best[0]:
            best = (key, h)
        if best[0][0] <= threshold:
            break

    (value, _), h = best
    return OracleFit(h=h, image=generate(h, x.height, cfg),
                     objective=value, converged=bool(value <= threshold),
                     n_evals=evals)


def _batches(items, width):
    for i in range(0, len(items), width):
        yield items[i:i + width]
