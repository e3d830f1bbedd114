"""Tubal tensor algebra, classical tensor robust PCA, and an unfolded
low-rank / sparse denoising network for hyperspectral cubes."""

from .errors import (
    AllSpectraZero,
    DataShapeMismatch,
    EmptySelection,
    MissingGrad,
    NonFinite,
    NonScalarLoss,
    RangeError,
    ShapeMismatch,
    SymmetryViolation,
    TrpcaError,
    WindowTooLarge,
)
from .metrics import psnr, sam, ssim
from .noise import NoiseSpec, apply_noise
from .solver import TrpcaConfig, TrpcaResult, default_lambda, soft_threshold, trpca_solve
from .tensor_ops import (
    TSvdFactors,
    dft_mode3,
    idft_mode3,
    reconstruct,
    t_identity,
    t_product,
    t_svd,
    t_transpose,
    truncated_tsvd_project,
    tsvt,
    tubal_nuclear_norm,
    tubal_rank,
)
from .unfolding import (
    TrainingSample,
    UnfoldingNet,
    build_unfolding_net,
    denoise,
    forward,
    stage_loss,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AllSpectraZero",
    "DataShapeMismatch",
    "EmptySelection",
    "MissingGrad",
    "NonFinite",
    "NonScalarLoss",
    "NoiseSpec",
    "RangeError",
    "ShapeMismatch",
    "SymmetryViolation",
    "TSvdFactors",
    "TrainingSample",
    "TrpcaConfig",
    "TrpcaError",
    "TrpcaResult",
    "UnfoldingNet",
    "WindowTooLarge",
    "apply_noise",
    "build_unfolding_net",
    "default_lambda",
    "denoise",
    "dft_mode3",
    "forward",
    "idft_mode3",
    "psnr",
    "reconstruct",
    "sam",
    "soft_threshold",
    "ssim",
    "stage_loss",
    "t_identity",
    "t_product",
    "t_svd",
    "t_transpose",
    "train",
    "trpca_solve",
    "truncated_tsvd_project",
    "tsvt",
    "tubal_nuclear_norm",
    "tubal_rank",
]
