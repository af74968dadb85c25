"""Training objective: class-balanced BCE per binary channel, MSE on the
doubled-angle channels, weighted per-frame aggregation, clip averaging.

The balancing factor alpha is the negative-to-positive pixel ratio of the
target, clamped from above by a per-channel ceiling. Frames with no
positive pixels use the ceiling itself, so fully occluded targets train
without a division blowing up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import LossConfig

CH_POS, CH_COS, CH_SIN, CH_WID, CH_SEM = range(5)


def balance_alpha(target: np.ndarray, beta: float) -> np.ndarray:
    """Negative/positive pixel ratio per leading index, clamped to beta.

    `target` is (..., H, W); positives are target > 0. Returns an array
    broadcastable against the target with shape (..., 1, 1).
    """
    t = np.asarray(target)
    pos = (t > 0).sum(axis=(-2, -1), keepdims=True).astype(np.float64)
    total = t.shape[-1] * t.shape[-2]
    neg = total - pos
    with np.errstate(divide="ignore"):
        ratio = np.where(pos > 0, neg / np.maximum(pos, 1), beta)
    return np.minimum(ratio, beta)


def balanced_bce(logits, target, beta: float) -> Tensor:
    """Class-balanced binary cross-entropy on logits; scalar mean over pixels.

    Accepts (H, W) or batched (..., H, W); batched inputs average the
    per-sample losses (each sample balanced by its own alpha).
    """
    logits = ad.as_tensor(logits)
    t = np.asarray(target, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ad.ShapeMismatch(f"balanced_bce: target {t.shape} vs logits {logits.shape}")
    alpha = balance_alpha(t, beta).astype(logits.dtype)
    return ad.weighted_bce_with_logits(logits, t, alpha)


def angle_mse(pred, target) -> Tensor:
    """Mean squared error over pixels (and any leading batch axes)."""
    pred = ad.as_tensor(pred)
    t = np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise ad.ShapeMismatch(f"angle_mse: target {t.shape} vs pred {pred.shape}")
    diff = ad.sub(pred, Tensor(t))
    return ad.mean(ad.mul(diff, diff))


@dataclass
class LossReport:
    """Scalar components plus the per-frame breakdown, all plain floats.

    `total_node` carries the differentiable scalar for backprop; it is not
    part of the serialized report.
    """

    pos: float
    ang: float
    wid: float
    semantic: float
    total: float
    per_frame: list = field(default_factory=list)
    total_node: Tensor | None = None

    def as_dict(self) -> dict:
        return {
            "pos": self.pos,
            "ang": self.ang,
            "wid": self.wid,
            "semantic": self.semantic,
            "total": self.total,
            "per_frame": self.per_frame,
        }


def frame_loss(pred, target, cfg: LossConfig) -> dict[str, Tensor]:
    """Weighted per-channel losses for one frame; pred/target are (..., H, W, 5)."""
    pred = ad.as_tensor(pred)
    t = np.asarray(target)
    pos = ad.mul(balanced_bce(pred[..., CH_POS], t[..., CH_POS], cfg.beta_pos), cfg.w_pos)
    ang = ad.add(
        ad.mul(angle_mse(pred[..., CH_COS], t[..., CH_COS]), cfg.w_cos),
        ad.mul(angle_mse(pred[..., CH_SIN], t[..., CH_SIN]), cfg.w_sin),
    )
    wid = ad.mul(balanced_bce(pred[..., CH_WID], t[..., CH_WID], cfg.beta_wid), cfg.w_wid)
    sem = ad.mul(balanced_bce(pred[..., CH_SEM], t[..., CH_SEM], cfg.beta_sem), cfg.w_sem)
    return {"pos": pos, "ang": ang, "wid": wid, "semantic": sem}


def clip_loss(preds, targets, cfg: LossConfig | None = None) -> LossReport:
    """Average the weighted frame losses across a clip.

    `preds` and `targets` are equal-length sequences of (..., H, W, 5)
    stacks (Tensors and numpy arrays respectively). The returned report
    carries floats plus the differentiable total in `total_node`.
    """
    cfg = cfg or LossConfig()
    if len(preds) != len(targets):
        raise ValueError(f"clip_loss: {len(preds)} predictions vs {len(targets)} targets")
    if len(preds) == 0:
        raise ValueError("clip_loss: empty clip")
    comp_sums = {"pos": 0.0, "ang": 0.0, "wid": 0.0, "semantic": 0.0}
    per_frame = []
    frame_totals = []
    for pred, target in zip(preds, targets):
        parts = frame_loss(pred, target, cfg)
        frame_total = ad.add(ad.add(parts["pos"], parts["ang"]), ad.add(parts["wid"], parts["semantic"]))
        frame_totals.append(frame_total)
        row = {k: float(v.data) for k, v in parts.items()}
        row["total"] = float(frame_total.data)
        per_frame.append(row)
        for k in comp_sums:
            comp_sums[k] += row[k]
    total_node = frame_totals[0]
    for ft in frame_totals[1:]:
        total_node = ad.add(total_node, ft)
    total_node = ad.mul(total_node, 1.0 / len(frame_totals))
    n = len(frame_totals)
    return LossReport(
        pos=comp_sums["pos"] / n,
        ang=comp_sums["ang"] / n,
        wid=comp_sums["wid"] / n,
        semantic=comp_sums["semantic"] / n,
        total=float(total_node.data),
        per_frame=per_frame,
        total_node=total_node,
    )
