"""Image denoising by learned subspace projection.

The heavy lifting lives in the C++ extension; this package re-exports the
public surface.
"""

from ._core import (
    ConfigError,
    IoError,
    Network,
    NumericalError,
    add_noise,
    cosine_lr,
    count_params,
    gradcheck,
    make_mask,
    presets,
    project,
    psnr,
    read_image,
    ssim,
    write_image,
)

__all__ = [
    "ConfigError",
    "IoError",
    "Network",
    "NumericalError",
    "add_noise",
    "cosine_lr",
    "count_params",
    "gradcheck",
    "make_mask",
    "presets",
    "project",
    "psnr",
    "read_image",
    "ssim",
    "write_image",
]
