"""Decode a 5-channel mask stack into ranked 4-DoF grasp poses.

Peaks are local maxima of the (lightly smoothed) position probability map;
greedy non-maximum suppression keeps the strongest peak per neighborhood.
Angle is recovered from the doubled-angle channels, width from the sigmoid
of the width logit scaled by the dataset's width normalizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import DecodeConfig
from .geometry import GraspPose, normalize_angle

CH_POS, CH_COS, CH_SIN, CH_WID, CH_SEM = range(5)


@dataclass(frozen=True)
class MaskStack:
    """H x W x 5 prediction: position logits, cos(2t), sin(2t), width logits, semantic logits."""

    channels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.channels)
        if arr.ndim != 3 or arr.shape[2] != 5:
            raise ValueError(f"MaskStack expects (H, W, 5), got {arr.shape}")
        object.__setattr__(self, "channels", arr)

    @property
    def position_logits(self) -> np.ndarray:
        return self.channels[..., CH_POS]

    @property
    def semantic_logits(self) -> np.ndarray:
        return self.channels[..., CH_SEM]

    def position_prob(self) -> np.ndarray:
        return _sigmoid(self.position_logits)

    def semantic_prob(self) -> np.ndarray:
        return _sigmoid(self.semantic_logits)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logits_from_targets(targets: np.ndarray, saturation: float = 12.0,
                        width_logit_bias: float = 2.302585092994046) -> MaskStack:
    """Lift a ground-truth target stack into logit space so decode() can read it.

    Binary channels map to +-saturation. The width channel maps through the
    inverse sigmoid plus the balanced-BCE log-odds bias: the network's
    trained optimum lives in that shifted space, and decode() removes the
    same constant, so GT round-trips recover w/w_max bit-faithfully.
    """
    t = np.asarray(targets, dtype=np.float64)
    out = np.empty_like(t)
    for ch in (CH_POS, CH_SEM):
        out[..., ch] = np.where(t[..., ch] > 0.5, saturation, -saturation)
    out[..., CH_COS] = t[..., CH_COS]
    out[..., CH_SIN] = t[..., CH_SIN]
    wid = np.clip(t[..., CH_WID], 1e-6, 1.0 - 1e-6)
    out[..., CH_WID] = np.log(wid / (1.0 - wid)) + width_logit_bias
    return MaskStack(out)


def decode(mask, cfg: DecodeConfig) -> list[GraspPose]:
    """Extract grasps: smoothed local maxima, strict threshold, greedy NMS.

    Returned poses are sorted by confidence descending with (row, col)
    lexicographic tie-breaks; any two centers are at least nms_radius apart
    in L-infinity distance.
    """
    channels = mask.channels if isinstance(mask, MaskStack) else np.asarray(mask)
    if channels.ndim != 3 or channels.shape[2] != 5:
        raise ValueError(f"decode expects (H, W, 5), got {channels.shape}")
    prob = _sigmoid(channels[..., CH_POS])
    field = ndimage.gaussian_filter(prob, sigma=cfg.smooth_sigma, mode="constant") if cfg.smooth_sigma > 0 else prob
    local_max = field == ndimage.maximum_filter(field, size=3, mode="constant")
    candidates = local_max & (prob > cfg.peak_threshold)
    rows, cols = np.nonzero(candidates)
    if rows.size == 0:
        return []
    conf = prob[rows, cols]
    order = np.lexsort((cols, rows, -conf))  # confidence desc, then row, then col

    kept: list[tuple[int, int, float]] = []
    for idx in order:
        r, c = int(rows[idx]), int(cols[idx])
        if any(max(abs(r - kr), abs(c - kc)) < cfg.nms_radius for kr, kc, _ in kept):
            continue
        kept.append((r, c, float(conf[idx])))
        if len(kept) == cfg.max_grasps:
            break

    h, w = prob.shape
    grasps = []
    for r, c, conf_val in kept:
        # angle from the probability-weighted mean of the doubled-angle
        # vectors around the peak: the direction of the mean is far more
        # stable than a single shrunken pixel
        rad = max(int(cfg.angle_window), 0)
        r0, r1 = max(r - rad, 0), min(r + rad + 1, h)
        c0, c1 = max(c - rad, 0), min(c + rad + 1, w)
        weights = prob[r0:r1, c0:c1] ** 2
        wsum = weights.sum()
        if wsum <= 0:
            cos_bar, sin_bar = channels[r, c, CH_COS], channels[r, c, CH_SIN]
        else:
            cos_bar = float((weights * channels[r0:r1, c0:c1, CH_COS]).sum() / wsum)
            sin_bar = float((weights * channels[r0:r1, c0:c1, CH_SIN]).sum() / wsum)
        theta = 0.5 * math.atan2(sin_bar, cos_bar)
        width = float(_sigmoid(np.asarray([channels[r, c, CH_WID] - cfg.width_logit_bias]))[0]) * cfg.w_max
        grasps.append(
            GraspPose(x=float(c), y=float(r), theta=normalize_angle(theta), width=width, confidence=conf_val)
        )
    return grasps


def decode_batch(masks, cfg: DecodeConfig) -> list[list[GraspPose]]:
    """Element-wise decode, order preserving."""
    return [decode(m, cfg) for m in masks]
