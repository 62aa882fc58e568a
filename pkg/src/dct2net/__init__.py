"""Sliding-window transform denoising.

Three denoisers built on one mechanism (analyze every p x p window, shrink
coefficients, synthesize, average the overlapping estimates):

- a fixed orthonormal cosine basis with hard thresholding,
- a learned p^2 x p^2 transform trained end to end through the full pipeline,
- a hybrid that keeps the fixed basis on flat regions (where the learned
  transform tends to leave artifacts) and the learned one near edges.
"""

from .classify import CannyParams, canny_edges, canny_mask, dilate, tv_mask
from .denoise import (
    DEFAULT_LAM_MULT,
    DenoiserModel,
    ModelFormatError,
    adaptive_weight,
    clean_patches,
    dct2net_forward,
    dct_denoise,
    dct_model,
    load_model,
    patch_forward,
    save_model,
)
from .hybrid import HybridConfig, dilation_sweep, hybrid_denoise
from .image import (
    ImageFormatError,
    add_gaussian_noise,
    half_width,
    patch_index,
    psnr,
    quantize,
    read_image,
    reflect_pad,
    write_image,
)
from .training import (
    AdamState,
    GradReport,
    TrainConfig,
    adam_step,
    batch_loss,
    grad_wrt_basis,
    gradcheck,
    loss_masked,
    loss_mse,
    loss_ortho_penalty,
    loss_patch_target,
    sample_batch,
    train,
    train_ortho_param,
    validation_psnr,
)
from .transform import (
    ShrinkSpec,
    TransformBasis,
    dct_basis,
    fold_thresholds,
    hard_shrink,
    matrix_sqrt_spd,
    nearest_orthonormal,
    orthogonal_to_orthonormal,
    orthogonality_energy,
    orthonormal_param,
    rescale_basis,
    smooth_indicator,
    smooth_shrink,
)

__version__ = "1.0.0"

__all__ = [
    "AdamState",
    "CannyParams",
    "DEFAULT_LAM_MULT",
    "DenoiserModel",
    "GradReport",
    "HybridConfig",
    "ImageFormatError",
    "ModelFormatError",
    "ShrinkSpec",
    "TrainConfig",
    "TransformBasis",
    "adam_step",
    "adaptive_weight",
    "add_gaussian_noise",
    "batch_loss",
    "canny_edges",
    "canny_mask",
    "clean_patches",
    "dct2net_forward",
    "dct_basis",
    "dct_denoise",
    "dct_model",
    "dilate",
    "dilation_sweep",
    "fold_thresholds",
    "grad_wrt_basis",
    "gradcheck",
    "half_width",
    "hard_shrink",
    "hybrid_denoise",
    "load_model",
    "loss_masked",
    "loss_mse",
    "loss_ortho_penalty",
    "loss_patch_target",
    "matrix_sqrt_spd",
    "nearest_orthonormal",
    "orthogonal_to_orthonormal",
    "orthogonality_energy",
    "orthonormal_param",
    "patch_forward",
    "patch_index",
    "psnr",
    "quantize",
    "read_image",
    "reflect_pad",
    "rescale_basis",
    "sample_batch",
    "save_model",
    "smooth_indicator",
    "smooth_shrink",
    "tv_mask",
    "train",
    "train_ortho_param",
    "validation_psnr",
    "write_image",
]
