"""Objective quality metrics for fused images.

All functions take planes scaled to [0, 1]. Entropy is a property of
the fused image alone; PSNR and SSIM are averaged over the input
images; spatial frequency and edge intensity measure local contrast
of the fused image. PSNR on identical planes returns the +inf
sentinel, and averaging skips infinite pairs unless every pair is
infinite.
"""

import numpy as np
from scipy.signal import convolve2d

from .spectral import as_plane

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

_SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]])


def entropy(p):
    """Shannon entropy (bits) of the 8-bit quantization of a plane.

    Values are mapped to levels with round-half-away-from-zero and
    binned into a 256-level histogram; empty bins contribute nothing.
    """
    p = as_plane(p)
    levels = np.floor(255.0 * p + 0.5).astype(np.int64)
    if levels.min() < 0 or levels.max() > 255:
        raise ValueError("entropy expects values in [0, 1]")
    counts = np.bincount(levels.ravel(), minlength=256)
    prob = counts[counts > 0] / levels.size
    return float(-np.sum(prob * np.log2(prob))) + 0.0


def psnr(ref, test):
    """Peak signal-to-noise ratio in dB with peak 1.0; identical
    planes give +inf."""
    ref = as_plane(ref)
    test = as_plane(test)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def avg_psnr(fused, inputs):
    """Mean PSNR of the fused plane against each input; infinite
    pairs are dropped, and only an all-infinite set yields inf."""
    values = [psnr(fused, p) for p in inputs]
    if not values:
        raise ValueError("no input planes")
    finite = [v for v in values if np.isfinite(v)]
    if not finite:
        return float("inf")
    return float(np.mean(finite))


def _ssim_window():
    r = SSIM_WINDOW // 2
    d = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(d * d) / (2.0 * SSIM_SIGMA ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(ref, test):
    """Single-scale structural similarity with an 11x11 Gaussian
    window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1, averaged
    over positions where the window fits entirely."""
    ref = as_plane(ref)
    test = as_plane(test)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    if min(ref.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {ref.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    w = _ssim_window()
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu1 = convolve2d(ref, w, mode="valid")
    mu2 = convolve2d(test, w, mode="valid")
    s11 = convolve2d(ref * ref, w, mode="valid") - mu1 * mu1
    s22 = convolve2d(test * test, w, mode="valid") - mu2 * mu2
    s12 = convolve2d(ref * test, w, mode="valid") - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


def avg_ssim(fused, inputs):
    values = [ssim(fused, p) for p in inputs]
    if not values:
        raise ValueError("no input planes")
    return float(np.mean(values))


def spatial_frequency(p):
    """Root of summed squared row and column frequencies: RMS of
    horizontal and vertical first differences, no wraparound."""
    p = as_plane(p)
    if p.shape[0] < 2 or p.shape[1] < 2:
        raise ValueError(f"plane {p.shape} too small for differences")
    rf = np.mean(np.diff(p, axis=1) ** 2)
    cf = np.mean(np.diff(p, axis=0) ** 2)
    return float(np.sqrt(rf + cf))


def edge_intensity(p):
    """Mean Sobel gradient magnitude over interior pixels."""
    p = as_plane(p)
    if p.shape[0] < 3 or p.shape[1] < 3:
        raise ValueError(f"plane {p.shape} smaller than the Sobel kernel")
    gx = convolve2d(p, _SOBEL_X, mode="valid")
    gy = convolve2d(p, _SOBEL_X.T, mode="valid")
    return float(np.mean(np.sqrt(gx * gx + gy * gy)))


def report(fused, inputs):
    """All five metrics as a dict keyed en, psnr, ssim, sf, ei."""
    return {
        "en": entropy(fused),
        "psnr": avg_psnr(fused, inputs),
        "ssim": avg_ssim(fused, inputs),
        "sf": spatial_frequency(fused),
        "ei": edge_intensity(fused),
    }
