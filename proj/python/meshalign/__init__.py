"""Mesh-based image alignment with contextual correlation."""

from ._meshalign import (
    AlignConfig,
    NoOverlapError,
    align,
    content_loss,
    from_4pt,
    load_image,
    make_texture,
    psnr_overlap,
    regular_mesh,
    rmse_4pt,
    run_cli,
    save_image,
    set_thread_count,
    ssim_overlap,
    synth_pair,
    thread_count,
    to_4pt,
    warp_global,
    warp_mesh,
)

__all__ = [
    "AlignConfig",
    "NoOverlapError",
    "align",
    "content_loss",
    "from_4pt",
    "load_image",
    "make_texture",
    "psnr_overlap",
    "regular_mesh",
    "rmse_4pt",
    "run_cli",
    "save_image",
    "set_thread_count",
    "ssim_overlap",
    "synth_pair",
    "thread_count",
    "to_4pt",
    "warp_global",
    "warp_mesh",
]
