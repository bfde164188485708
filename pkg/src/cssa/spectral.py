"""Dense 2-D array and frequency-domain primitives.

All arrays are 64-bit floating point. A "plane" is a 2-D real array
(one grayscale image or one coefficient map); a "spectrum" is its
complex 2-D DFT. The convolution model throughout the package is
circular (periodic boundary), which makes the frequency-domain solves
in the coding and dictionary-update modules diagonal per bin.
"""

import numpy as np


def as_plane(p):
    """Coerce input to a finite 2-D float64 array."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("plane contains non-finite values")
    return p


def dft2(p):
    """Unnormalized forward 2-D DFT of a real plane.

    The inverse transform `idft2` carries the 1/(HW) factor.
    """
    return np.fft.fft2(np.asarray(p, dtype=np.float64))


def idft2(s, imag_tol=1e-8):
    """Real part of the normalized inverse 2-D DFT.

    Raises if the imaginary residual exceeds ``imag_tol`` times the
    norm of the inverse transform, which signals a spectrum that is
    not conjugate-symmetric (i.e. not the DFT of a real plane).
    """
    out = np.fft.ifft2(np.asarray(s, dtype=np.complex128))
    imag_norm = np.linalg.norm(out.imag)
    if imag_norm > imag_tol * np.linalg.norm(out):
        raise ValueError(
            f"spectrum is not conjugate-symmetric: imaginary residual "
            f"{imag_norm:.3e} exceeds {imag_tol:g} of the array norm"
        )
    return out.real


def pad_filter(d, height, width):
    """Embed a q x q filter into the top-left corner of an H x W plane.

    Zero-padding to the signal grid is what turns the small filters
    into same-size circular convolution kernels.
    """
    d = np.asarray(d, dtype=np.float64)
    q0, q1 = d.shape
    if q0 > height or q1 > width:
        raise ValueError(
            f"filter {d.shape} does not fit inside a {height}x{width} plane"
        )
    out = np.zeros((height, width))
    out[:q0, :q1] = d
    return out


def crop_filter(p, q):
    """Return the top-left q x q block of a plane."""
    p = np.asarray(p, dtype=np.float64)
    if q > p.shape[0] or q > p.shape[1]:
        raise ValueError(f"crop size {q} exceeds plane shape {p.shape}")
    return p[:q, :q].copy()


def circ_conv(a, b):
    """Circular (periodic-boundary) 2-D convolution of two same-size planes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    return idft2(dft2(a) * dft2(b))


def gradient_energy_spectrum(height, width):
    """Squared magnitude spectrum |Gx|^2 + |Gy|^2 of the circular
    first-difference operators, used by the Tikhonov lowpass filter."""
    wx = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(width) / width)
    wy = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(height) / height)
    return wy[:, None] + wx[None, :]


def tikhonov_lowpass(p, reg):
    """Gradient-regularized lowpass component of a plane.

    Solves ``argmin_x 0.5*||x - p||^2 + (reg/2)*(||Gx x||^2 + ||Gy x||^2)``
    in the frequency domain with circular first-difference operators,
    i.e. multiplies each bin by ``1 / (1 + reg*(|Gx|^2 + |Gy|^2))``.
    The DC gain is exactly 1, so the mean of the input is preserved.
    """
    if reg <= 0:
        raise ValueError(f"lowpass regularization must be positive, got {reg}")
    p = as_plane(p)
    h, w = p.shape
    denom = 1.0 + reg * gradient_energy_spectrum(h, w)
    return np.fft.irfft2(np.fft.rfft2(p) / denom[:, : w // 2 + 1], s=(h, w))
