"""Ground-truth 5-channel target rasterization.

Channel layout matches the network head: 0 grasp position, 1 cos(2 theta),
2 sin(2 theta), 3 normalized width, 4 semantic instance mask. The position
channel paints the central third of each grasp rectangle along the jaw
axis (full extent across it), intersected with the visible semantic mask
so the graspable area is always a subset of the instance mask.
"""

from __future__ import annotations

import math

import numpy as np

from .generator import Clip

CH_POS, CH_COS, CH_SIN, CH_WID, CH_SEM = range(5)


def _strip_mask(grid_x, grid_y, grasp) -> np.ndarray:
    """Central-third strip of the grasp rectangle: |u| <= w/6, |v| <= w/4."""
    c, s = math.cos(grasp.theta), math.sin(grasp.theta)
    dx = grid_x - grasp.x
    dy = grid_y - grasp.y
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= grasp.width / 6.0) & (np.abs(v) <= grasp.width / 4.0)


def rasterize_targets(clip: Clip, instance: int, frame: int) -> np.ndarray:
    """Float32 (H, W, 5) training target for one instance in one frame."""
    ann = clip.annotations[frame]
    if instance not in ann:
        raise KeyError(f"instance {instance} not annotated in frame {frame} of {clip.clip_id}")
    inst = ann[instance]
    h, w = inst.visible_mask.shape
    target = np.zeros((h, w, 5), dtype=np.float32)
    sem = inst.visible_mask
    target[..., CH_SEM] = sem

    grid_y, grid_x = np.mgrid[0:h, 0:w].astype(np.float64)
    for grasp in inst.grasps:  # later grasps overwrite angle/width on overlap
        strip = _strip_mask(grid_x, grid_y, grasp) & sem
        if not strip.any():
            continue
        target[strip, CH_POS] = 1.0
        target[strip, CH_COS] = math.cos(2.0 * grasp.theta)
        target[strip, CH_SIN] = math.sin(2.0 * grasp.theta)
        target[strip, CH_WID] = min(grasp.width / clip.w_max, 1.0)
    return target


def target_clip_stack(clip: Clip, instance: int) -> np.ndarray:
    """Targets for every frame: (T, H, W, 5)."""
    return np.stack([rasterize_targets(clip, instance, t) for t in range(clip.length)])
