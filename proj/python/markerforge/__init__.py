"""Synthetic marker correspondence toolkit."""

from ._core import (
    dense_match,
    epe,
    generate,
    grad_l_syn,
    homography_match,
    l_sed,
    l_syn,
    load_manifest,
    load_transform,
    pck,
    psnr,
    read_flo,
    read_png,
    sed,
    ssim,
    write_flo,
    write_png,
)

__all__ = [
    "dense_match",
    "epe",
    "generate",
    "grad_l_syn",
    "homography_match",
    "l_sed",
    "l_syn",
    "load_manifest",
    "load_transform",
    "pck",
    "psnr",
    "read_flo",
    "read_png",
    "sed",
    "ssim",
    "write_flo",
    "write_png",
]
