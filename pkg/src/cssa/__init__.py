"""Convolutional simultaneous sparse approximation toolkit.

Jointly sparse convolutional coding of multimodal signals, batch
convolutional dictionary learning, and sparse-coding image fusion
with objective quality metrics.
"""

from .cdl import (CdlOptions, Dictionary, DictionarySet, LearnResult,
                  TrainingBatch, dict_update, init_dictionary, learn,
                  project_dictionary)
from .fusion import (BandDecomposition, FusedCoefficients, FusionConfig,
                     YcbcrImage, fuse_coeffs_maxabs, fuse_multifocus,
                     fuse_nir_vl, fuse_nir_vl_ycbcr, lowpass_decompose,
                     luma, reconstruct_fused, rgb_to_ycbcr, select_maxabs,
                     ycbcr_to_rgb)
from .io import DictFormatError, load_dict, load_image, save_dict, save_image
from .metrics import (avg_psnr, avg_ssim, edge_intensity, entropy, psnr,
                      spatial_frequency, ssim)
from .prox import ProxWeights, project_l1_ball, prox_l1_l2, prox_l2, \
    prox_linf, shrink
from .solver import (AdmmState, EncodeDiagnostics, RegKind, Regularizer,
                     SolverOptions, approx_error, encode, objective,
                     reconstruct, sparsity_ratio, support_overlap, x_update,
                     y_update)
from .spectral import (circ_conv, crop_filter, dft2, idft2, pad_filter,
                       tikhonov_lowpass)

__version__ = "0.1.0"

__all__ = [
    "AdmmState", "BandDecomposition", "CdlOptions", "DictFormatError",
    "Dictionary", "DictionarySet", "EncodeDiagnostics", "FusedCoefficients",
    "FusionConfig", "LearnResult", "ProxWeights", "RegKind", "Regularizer",
    "SolverOptions", "TrainingBatch", "YcbcrImage", "approx_error",
    "avg_psnr", "avg_ssim", "circ_conv", "crop_filter", "dft2",
    "dict_update", "edge_intensity", "encode", "entropy",
    "fuse_coeffs_maxabs", "fuse_multifocus", "fuse_nir_vl",
    "fuse_nir_vl_ycbcr", "idft2", "init_dictionary", "learn", "load_dict",
    "load_image", "lowpass_decompose", "luma", "objective", "pad_filter",
    "project_dictionary", "project_l1_ball", "prox_l1_l2", "prox_l2",
    "prox_linf", "psnr", "reconstruct", "reconstruct_fused", "rgb_to_ycbcr",
    "save_dict", "save_image", "select_maxabs", "shrink",
    "sparsity_ratio", "spatial_frequency", "ssim", "support_overlap",
    "tikhonov_lowpass", "x_update", "y_update", "ycbcr_to_rgb",
]
