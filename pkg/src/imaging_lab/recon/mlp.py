"""Latent-regression network: aliased image in, generator parameters out.

A small ensemble of fully connected rectifier networks trained with Adam
stands in for the paper-scale image-to-image architecture; composed with
the generator it yields a reconstruction map that carries the same
group-data fidelity structure at desk scale.

Each ensemble member is a two-head network. A geometry head maps the
scale-normalized pixel block to the six disk coordinates, and a small
intensity head maps the image log-magnitude together with the geometry to
the log intensity. Splitting the scalar route out keeps the intensity
estimate from leaning on memorized pixel patterns.
"""

from dataclasses import dataclass

import numpy as np

from ..grid import Image
from ..manifold import LATENT_DIM, LatentBox, LatentPoint, Dataset, generate
from ..util import rng_from_seed
from ..xform import RadonConfig

INPUT_SIDE = 32


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")


class _Net:
    """Weights and biases of one rectifier network with its input/output
    standardization."""

    def __init__(self, weights, biases, in_off, in_scale, out_off, out_scale):
        self.weights = weights
        self.biases = biases
        self.in_off = in_off
        self.in_scale = in_scale
        self.out_off = out_off
        self.out_scale = out_scale

    def __call__(self, rows):
        acts = (rows - self.in_off) / self.in_scale
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            acts = np.maximum(acts @ w + b, 0.0)
        out = acts @ self.weights[-1] + self.biases[-1]
        return out * self.out_scale + self.out_off


@dataclass
class MlpModel:
    """Ensemble of paired geometry and intensity heads, averaged at predict
    time; intensity is regressed in log scale and exponentiated back."""

    geometry: list
    intensity: list
    box: LatentBox

    @property
    def layer_sizes(self):
        """Hidden/output widths of one geometry head."""
        net = self.geometry[0]
        return [net.weights[0].shape[0]] + [w.shape[1] for w in net.weights]

    def predict(self, features):
        """Latent estimates for raw (unstandardized) feature rows."""
        rows = _scale_split(features)
        geo = np.mean([net(rows) for net in self.geometry], axis=0)
        mag_in = np.hstack([rows[:, -1:], geo])
        log_h7 = np.mean([net(mag_in) for net in self.intensity], axis=0)
        return np.hstack([geo, np.exp(log_h7)])


def features_of(image) -> np.ndarray:
    """Network input: the real part block-averaged to 32x32 and raveled."""
    values = image.values if isinstance(image, Image) else np.asarray(image)
    values = np.real(values).astype(float)
    n = values.shape[0]
    if n % INPUT_SIDE:
        raise ValueError(f"side {n} is not a multiple of {INPUT_SIDE}")
    f = n // INPUT_SIDE
    pooled = values.reshape(INPUT_SIDE, f, INPUT_SIDE, f).mean(axis=(1, 3))
    return pooled.ravel()


def _scale_split(features):
    """Row-wise (shape, scale) factorization of the pixel block.

    Disk geometry is carried by the unit-normalized pixels and the overall
    magnitude by one appended log-norm column. The norm is floored so the
    zero image stays finite.
    """
    rows = np.atleast_2d(np.asarray(features, dtype=float))
    norms = np.maximum(np.linalg.norm(rows, axis=1, keepdims=True), 1e-12)
    return np.hstack([rows / norms, np.log(norms)])


def loss_and_grads(weights, biases, inputs, targets):
    """Mean-squared loss over a batch and its analytic parameter gradients."""
    acts = [np.atleast_2d(inputs)]
    pre = []
    for w, b in zip(weights[:-1], biases[:-1]):
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0))
    out = acts[-1] @ weights[-1] + biases[-1]
    diff = out - targets
    loss = float(np.mean(diff * diff))

    delta = 2.0 * diff / diff.size
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ weights[layer].T) * (pre[layer - 1] > 0)
    return loss, grads_w, grads_b


class _Job:
    """One network being fitted: standardized data plus Adam state."""

    def __init__(self, rng, X, T, hidden):
        self.in_off = X.mean(axis=0)
        self.in_scale = np.maximum(X.std(axis=0), 1e-8)
        self.out_off = T.mean(axis=0)
        self.out_scale = np.maximum(T.std(axis=0), 1e-8)
        self.X = (X - self.in_off) / self.in_scale
        self.T = (T - self.out_off) / self.out_scale
        sizes = [X.shape[1]] + list(hidden) + [T.shape[1]]
        self.weights = [
            rng.normal(0.0, np.sqrt(2.0 / sizes[i]), (sizes[i], sizes[i + 1]))
            for i in range(len(sizes) - 1)
        ]
        self.biases = [np.zeros(s) for s in sizes[1:]]
        self.mom = [np.zeros_like(w) for w in self.weights] + [
            np.zeros_like(b) for b in self.biases
        ]
        self.sq = [np.zeros_like(m) for m in self.mom]
        self.step = 0

    def update(self, rows, lr):
        loss, gw, gb = loss_and_grads(self.weights, self.biases,
                                      self.X[rows], self.T[rows])
        if not np.isfinite(loss):
            raise RuntimeError("non-finite training loss")
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        self.step += 1
        corr1 = 1.0 - beta1**self.step
        corr2 = 1.0 - beta2**self.step
        params = self.weights + self.biases
        grads = gw + gb
        for p, g, m, v in zip(params, grads, self.mom, self.sq):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
        return loss

    def net(self):
        return _Net(self.weights, self.biases, self.in_off, self.in_scale,
                    self.out_off, self.out_scale)


def train_mlp(ds: Dataset, tcfg: TrainConfig | None = None,
              arch=(192, 96), members: int = 3):
    """Fit the latent regressor; returns (model, per-epoch loss trace).

    Batches are shuffled deterministically from the seed and parameters
    updated by the adaptive-moment rule; inputs and targets are standardized
    once from the training set and the transforms stored per network. Latent
    targets are canonicalized so the disk ordering is unambiguous. All
    ensemble members train on the same batch schedule from independent
    initializations; the trace is the mean over networks of the epoch mean
    batch loss. The intensity heads are fitted against the true geometry and
    composed with the geometry heads only at predict time.
    """
    if ds.count < 1:
        raise ValueError("dataset is empty")
    if members < 1:
        raise ValueError("at least one ensemble member is required")
    tcfg = tcfg if tcfg is not None else TrainConfig()
    rng = rng_from_seed(tcfg.seed)

    rows = _scale_split(np.stack([features_of(x) for x in ds.xs]))
    targets = np.stack([LatentPoint(h).canonical().values for h in ds.hs])
    geo = targets[:, :6]
    log_h7 = np.log(targets[:, 6:7])
    mag_in = np.hstack([rows[:, -1:], geo])

    jobs = []
    for _ in range(members):
        jobs.append(_Job(rng, rows, geo, arch))
        jobs.append(_Job(rng, mag_in, log_h7, (32, 16)))

    losses = np.empty(tcfg.epochs)
    for epoch in range(tcfg.epochs):
        order = rng.permutation(ds.count)
        epoch_loss = 0.0
        batches = 0
        for lo in range(0, ds.count, tcfg.batch_size):
            batch = order[lo:lo + tcfg.batch_size]
            for job in jobs:
                try:
                    epoch_loss += job.update(batch, tcfg.learning_rate)
                except RuntimeError as exc:
                    raise RuntimeError(f"{exc} at epoch {epoch}") from None
            batches += 1
        losses[epoch] = epoch_loss / (batches * len(jobs))

    model = MlpModel(geometry=[j.net() for j in jobs[0::2]],
                     intensity=[j.net() for j in jobs[1::2]],
                     box=ds.box)
    return model, losses


def mlp_reconstruct(model: MlpModel, x: Image,
                    radon_cfg: RadonConfig | None = None) -> Image:
    """Predict the latent for one measured image and rerun the generator.

    Predictions are clamped into the training box, so any input yields a
    valid (if degenerate) latent.
    """
    raw = model.predict(features_of(x))[0]
    h = LatentPoint(model.box.clamp(raw))
    return generate(h, x.height, radon_cfg)


def predict_latent(model: MlpModel, x: Image) -> LatentPoint:
    """Clamped latent prediction without rendering the image."""
    return LatentPoint(model.box.clamp(model.predict(features_of(x))[0]))
