"""Reference quality metrics for hyperspectral cubes: band-averaged PSNR,
single-scale SSIM with the standard 11x11 Gaussian window, and the spectral
angle mapper in radians."""

from __future__ import annotations

import numpy as np

from .errors import AllSpectraZero, ShapeMismatch, WindowTooLarge

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _check_pair(ref, est):
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if ref.shape != est.shape:
        raise ShapeMismatch(f"shapes {ref.shape} and {est.shape} differ")
    if ref.ndim != 3:
        raise ShapeMismatch(f"expected 3-way cubes, got shape {ref.shape}")
    return ref, est


def psnr(ref, est, peak: float = 1.0) -> float:
    """Mean over bands of 10*log10(peak^2 / band MSE).

    A band with zero error contributes the 100 dB sentinel instead of +inf.
    """
    ref, est = _check_pair(ref, est)
    mse = np.mean((ref - est) ** 2, axis=(0, 1))
    vals = np.where(
        mse > 0,
        10.0 * np.log10(peak**2 / np.where(mse > 0, mse, 1.0)),
        PSNR_CAP_DB,
    )
    return float(vals.mean())


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _windowed(band: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid-mode weighted local mean of a 2-D field."""
    size = kernel.shape[0]
    wins = np.lib.stride_tricks.sliding_window_view(band, (size, size))
    return np.einsum("hwij,ij->hw", wins, kernel)


def ssim(ref, est, peak: float = 1.0) -> float:
    """Band-wise mean of the standard single-scale SSIM.

    11x11 Gaussian window (sigma 1.5), C1=(0.01*peak)^2, C2=(0.03*peak)^2,
    population moments, averaged over the valid window positions.
    """
    ref, est = _check_pair(ref, est)
    n1, n2, n3 = ref.shape
    if min(n1, n2) < SSIM_WINDOW:
        raise WindowTooLarge(
            f"spatial dims {n1}x{n2} smaller than the {SSIM_WINDOW}-pixel window"
        )
    kern = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    scores = np.empty(n3)
    for b in range(n3):
        x, y = ref[:, :, b], est[:, :, b]
        mu_x = _windowed(x, kern)
        mu_y = _windowed(y, kern)
        var_x = _windowed(x * x, kern) - mu_x**2
        var_y = _windowed(y * y, kern) - mu_y**2
        cov = _windowed(x * y, kern) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        scores[b] = np.mean(num / den)
    return float(scores.mean())


def sam(ref, est) -> float:
    """Mean spectral angle (radians) over spatial positions.

    Positions where either spectrum is identically zero are excluded; the
    cosine is clamped to [-1, 1] before arccos.
    """
    ref, est = _check_pair(ref, est)
    dot = np.sum(ref * est, axis=2)
    n_ref = np.linalg.norm(ref, axis=2)
    n_est = np.linalg.norm(est, axis=2)
    valid = (n_ref > 0) & (n_est > 0)
    if not valid.any():
        raise AllSpectraZero("no position has a nonzero spectrum in both cubes")
    cosv = np.clip(dot[valid] / (n_ref[valid] * n_est[valid]), -1.0, 1.0)
    return float(np.mean(np.arccos(cosv)))
