"""Image fusion pipelines built on joint sparse coding.

Two pipelines are provided. The NIR-VL pipeline fuses a color
visible-light image with a grayscale near-infrared image: the VL
image is split into luma and chroma, both luma planes are separated
into low and high bands, the high bands are encoded jointly (element
plus row sparsity) against a two-modality dictionary set, the
coefficient maps are merged by the max-absolute-value rule with ties
kept from the VL side, and the fused high band is reconstructed and
recombined with the VL low band and chroma.

The multifocus pipeline fuses N >= 2 views of the same scene with a
single dictionary and a pure row-sparsity encode, so all views share
one support; at every site the coefficient of largest magnitude wins.
The low bands are averaged. Color handling for multifocus inputs is
described at fuse_multifocus.

Colorspace conversions use the full-range BT.601 luma/chroma weights
on the [0, 1] scale; the inverse is algebraically exact and pixel
values are clamped only when the final RGB image is assembled.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .cdl import Dictionary, DictionarySet
from .solver import Regularizer, SolverOptions, encode, reconstruct
from .spectral import as_plane, tikhonov_lowpass

KB = 0.114
KR = 0.299
CB_SCALE = 0.564
CR_SCALE = 0.713


@dataclass(frozen=True)
class YcbcrImage:
    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray

    def __post_init__(self):
        y, cb, cr = (as_plane(c) for c in (self.y, self.cb, self.cr))
        if y.shape != cb.shape or y.shape != cr.shape:
            raise ValueError("luma and chroma sizes differ")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "cb", cb)
        object.__setattr__(self, "cr", cr)


@dataclass(frozen=True)
class BandDecomposition:
    """Additive split of a plane into lowpass and highpass parts."""

    low: np.ndarray
    high: np.ndarray


@dataclass(frozen=True)
class FusedCoefficients:
    """Merged coefficient maps; at every site at most one of the two
    stacks is nonzero."""

    Fv: np.ndarray
    Fn: np.ndarray

    def __post_init__(self):
        Fv = np.asarray(self.Fv, dtype=np.float64)
        Fn = np.asarray(self.Fn, dtype=np.float64)
        if Fv.shape != Fn.shape:
            raise ValueError(f"shape mismatch: {Fv.shape} vs {Fn.shape}")
        if np.any((Fv != 0) & (Fn != 0)):
            raise ValueError("overlapping nonzero coefficients")
        object.__setattr__(self, "Fv", Fv)
        object.__setattr__(self, "Fn", Fn)


@dataclass(frozen=True)
class FusionConfig:
    """Encode settings and lowpass strength for the fusion pipelines."""

    regularizer: Regularizer
    solver: SolverOptions = field(default_factory=SolverOptions)
    lowpass_reg: float = 5.0

    def __post_init__(self):
        if self.lowpass_reg <= 0:
            raise ValueError("lowpass_reg must be positive")

    @classmethod
    def nir_vl(cls, gamma1=0.001, gamma2=0.01, rho=10.0, **kw):
        return cls(Regularizer.l1_l21(gamma1, gamma2),
                   SolverOptions(rho=rho), **kw)

    @classmethod
    def multifocus(cls, lam=0.01, rho=10.0, **kw):
        return cls(Regularizer.l21(lam), SolverOptions(rho=rho), **kw)


def _as_rgb(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def rgb_to_ycbcr(img):
    """Full-range BT.601 split of an (H, W, 3) image in [0, 1]."""
    img = _as_rgb(img)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    y = KR * r + (1.0 - KR - KB) * g + KB * b
    cb = 0.5 + (b - y) * CB_SCALE
    cr = 0.5 + (r - y) * CR_SCALE
    return YcbcrImage(y, cb, cr)


def ycbcr_to_rgb(img, clip=True):
    """Exact algebraic inverse of rgb_to_ycbcr; clamps to [0, 1]
    unless clip is disabled."""
    y, cb, cr = img.y, img.cb, img.cr
    b = y + (cb - 0.5) / CB_SCALE
    r = y + (cr - 0.5) / CR_SCALE
    g = (y - KR * r - KB * b) / (1.0 - KR - KB)
    rgb = np.stack([r, g, b], axis=-1)
    if clip:
        rgb = np.clip(rgb, 0.0, 1.0)
    return rgb


def luma(img):
    """Luma plane of a grayscale or color image."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return as_plane(img)
    return rgb_to_ycbcr(img).y


def lowpass_decompose(p, reg=5.0):
    """Split a plane into a gradient-penalized lowpass component and
    the highpass residual; the parts sum back to the input."""
    low = tikhonov_lowpass(p, reg)
    return BandDecomposition(low, as_plane(p) - low)


def fuse_coeffs_maxabs(Xv, Xn):
    """Keep, per filter and site, the coefficient of larger magnitude;
    ties go to the first (VL) stack. The result is an exclusive
    partition: exactly one output is zeroed at every site."""
    Xv = np.asarray(Xv, dtype=np.float64)
    Xn = np.asarray(Xn, dtype=np.float64)
    if Xv.shape != Xn.shape:
        raise ValueError(f"shape mismatch: {Xv.shape} vs {Xn.shape}")
    keep_v = np.abs(Xv) >= np.abs(Xn)
    return FusedCoefficients(np.where(keep_v, Xv, 0.0),
                             np.where(keep_v, 0.0, Xn))


def reconstruct_fused(F: FusedCoefficients, dicts: DictionarySet):
    """Sum of the two per-modality syntheses of the fused maps."""
    if len(dicts) != 2:
        raise ValueError(f"expected 2 modality dictionaries, got {len(dicts)}")
    return (reconstruct(F.Fv[None], dicts[0])[0]
            + reconstruct(F.Fn[None], dicts[1])[0])


def fuse_nir_vl_ycbcr(vl, nir, dicts: DictionarySet, cfg: FusionConfig = None):
    """Fuse a color VL image with a grayscale NIR plane, returning
    the unclamped YCbCr result.

    The dictionary set must hold two modalities in (VL, NIR) order.
    The chroma planes pass through from the VL input untouched; the
    luma is the fused high band plus the VL low band.
    """
    cfg = cfg or FusionConfig.nir_vl()
    split = rgb_to_ycbcr(vl)
    nir = as_plane(nir)
    if nir.shape != split.y.shape:
        raise ValueError(
            f"size mismatch: VL {split.y.shape} vs NIR {nir.shape}"
        )
    if len(dicts) != 2:
        raise ValueError(f"expected 2 modality dictionaries, got {len(dicts)}")
    bv = lowpass_decompose(split.y, cfg.lowpass_reg)
    bn = lowpass_decompose(nir, cfg.lowpass_reg)
    X, _ = encode(np.stack([bv.high, bn.high]), dicts,
                  cfg.regularizer, cfg.solver)
    fused = fuse_coeffs_maxabs(X[0], X[1])
    high = reconstruct_fused(fused, dicts)
    return YcbcrImage(bv.low + high, split.cb, split.cr)


def fuse_nir_vl(vl, nir, dicts: DictionarySet, cfg: FusionConfig = None):
    """Fused NIR-VL image as an (H, W, 3) RGB array clamped to [0, 1]."""
    return ycbcr_to_rgb(fuse_nir_vl_ycbcr(vl, nir, dicts, cfg))


def select_maxabs(X):
    """Collapse an (N, K, H, W) stack to the per-site coefficient of
    maximum magnitude. Returns the fused (K, H, W) maps and the
    winning input index per site (ties resolve to the lowest index)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ValueError(f"expected (N, K, H, W) stack, got {X.shape}")
    winner = np.argmax(np.abs(X), axis=0)
    fused = np.take_along_axis(X, winner[None], axis=0)[0]
    return fused, winner


def _chroma_votes(winner, fused, n_inputs, q):
    """Per input, the count of nonzero winning coefficients inside
    the q x q neighborhood of each pixel, summed over filters."""
    active = fused != 0
    box = np.ones((q, q))
    votes = np.empty((n_inputs,) + winner.shape[1:])
    for n in range(n_inputs):
        hits = np.sum((winner == n) & active, axis=0).astype(np.float64)
        votes[n] = convolve2d(hits, box, mode="same")
    return votes


def fuse_multifocus(inputs, dictionary: Dictionary, cfg: FusionConfig = None):
    """Fuse N >= 2 registered views with a shared-support encode.

    Grayscale inputs produce a grayscale plane. If any input is
    color, the result is RGB: luma is fused as usual and each output
    chroma pixel is taken from the input that wins the most nonzero
    coefficient selections in the surrounding q x q window (ties are
    averaged over the tied inputs); grayscale members contribute
    neutral chroma.
    """
    cfg = cfg or FusionConfig.multifocus()
    if len(inputs) < 2:
        raise ValueError(f"need at least 2 inputs, got {len(inputs)}")
    arrays = [np.asarray(p, dtype=np.float64) for p in inputs]
    color = [a.ndim == 3 for a in arrays]
    lumas = [luma(a) for a in arrays]
    shape = lumas[0].shape
    if any(p.shape != shape for p in lumas[1:]):
        raise ValueError("input sizes differ")
    if isinstance(dictionary, DictionarySet):
        if len(dictionary) != 1:
            raise ValueError("multifocus fusion uses a single dictionary")
        dictionary = dictionary[0]

    bands = [lowpass_decompose(p, cfg.lowpass_reg) for p in lumas]
    X, _ = encode(np.stack([b.high for b in bands]), dictionary,
                  cfg.regularizer, cfg.solver)
    fused_coeffs, winner = select_maxabs(X)
    high = reconstruct(fused_coeffs[None], dictionary)[0]
    low = np.mean([b.low for b in bands], axis=0)
    fused_luma = low + high
    if not any(color):
        return np.clip(fused_luma, 0.0, 1.0)

    splits = [rgb_to_ycbcr(a) if c else None
              for a, c in zip(arrays, color)]
    half = np.full(shape, 0.5)
    cbs = [s.cb if s is not None else half for s in splits]
    crs = [s.cr if s is not None else half for s in splits]
    votes = _chroma_votes(winner, fused_coeffs, len(arrays),
                          dictionary.filter_size)
    best = np.max(votes, axis=0)
    tied = votes == best
    weights = tied / np.sum(tied, axis=0)
    cb = np.sum(weights * np.stack(cbs), axis=0)
    cr = np.sum(weights * np.stack(crs), axis=0)
    return ycbcr_to_rgb(YcbcrImage(fused_luma, cb, cr))
