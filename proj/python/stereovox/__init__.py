"""Stereo to octree occupancy network."""

from ._stereovox import (
    VoxelNet,
    build_pyramid,
    chamfer_distance,
    config,
    disparity_plan,
    eval_iou,
    next_exit_level,
    render_scene,
)

__all__ = [
    "VoxelNet",
    "build_pyramid",
    "chamfer_distance",
    "config",
    "disparity_plan",
    "eval_iou",
    "next_exit_level",
    "render_scene",
]
