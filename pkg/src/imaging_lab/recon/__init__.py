"""Reconstruction methods: oracle projection, linear and sparse baselines,
and the learned latent regressor."""

from .wavelet import WaveletCoeffs, dwt2, idwt2, wavelet_fwd, wavelet_inv
from .linear import PcaBasis, pca_fit, pca_recon
from .sparse import (
    SolverConfig,
    SolveResult,
    cs_l1_recon,
    l1_solve,
    l1_sweep,
    lambda_grid,
    tv_recon,
    tv_solve,
    tv_sweep,
)
from .oracle import OracleFit, oracle_fit
from .mlp import (
    INPUT_SIDE,
    MlpModel,
    TrainConfig,
    features_of,
    loss_and_grads,
    mlp_reconstruct,
    predict_latent,
    train_mlp,
)

__all__ = [
    "WaveletCoeffs",
    "dwt2",
    "idwt2",
    "wavelet_fwd",
    "wavelet_inv",
    "PcaBasis",
    "pca_fit",
    "pca_recon",
    "SolverConfig",
    "SolveResult",
    "cs_l1_recon",
    "l1_solve",
    "l1_sweep",
    "lambda_grid",
    "tv_recon",
    "tv_solve",
    "tv_sweep",
    "OracleFit",
    "oracle_fit",
    "INPUT_SIDE",
    "MlpModel",
    "TrainConfig",
    "features_of",
    "loss_and_grads",
    "mlp_reconstruct",
    "predict_latent",
    "train_mlp",
]
