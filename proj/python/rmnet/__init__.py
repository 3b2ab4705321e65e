"""Rotation-pooled convolution primitives.

Feature maps are numpy arrays shaped (n, c, h, w). The central operation is
``rm_conv``: expand the input into k clockwise-rotated copies, run one shared
convolution on each, rotate every branch output back, and fuse the branches
by elementwise mean or max. With exact quarter-turn rotations the fused
output of a rotated input equals the rotated fused output, and its global
average pool is rotation-invariant.
"""

from ._core import (
    class_metrics,
    conv2d,
    cosine_topk,
    diagonal_bound,
    fuse,
    gen_synthetic,
    global_avg_pool,
    kappa,
    map_at_10,
    mrr_at_10,
    pick_canvas,
    realign,
    rm_conv,
    rot90,
    rotate,
)

__all__ = [
    "class_metrics",
    "conv2d",
    "cosine_topk",
    "diagonal_bound",
    "fuse",
    "gen_synthetic",
    "global_avg_pool",
    "kappa",
    "map_at_10",
    "mrr_at_10",
    "pick_canvas",
    "realign",
    "rm_conv",
    "rot90",
    "rotate",
]

__version__ = "0.1.0"
