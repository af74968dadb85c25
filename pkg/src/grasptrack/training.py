"""Clip-based training loop.

Each training clip is unrolled with the first frame prompted (ground-truth
box, jittered) and the remaining frames tracked through the memory path;
the weighted 5-channel loss is averaged over the clip and backpropagated
through the whole unrolled graph. Batches of clips run in lockstep so the
convolutions execute as single GEMMs.
"""

from __future__ import annotations

import csv
import json
import math
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import DecodeConfig, LossConfig, ModelConfig, TrainConfig
from .losses import clip_loss
from .model import Prompt, PromptableGraspNet
from .scene import DatasetReader, target_clip_stack


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainReport:
    epochs: int
    curves: dict = field(default_factory=dict)   # name -> per-epoch list
    wall_clock_s: float = 0.0
    eval_accuracy: float | None = None
    eval_history: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "curves": self.curves,
            "wall_clock_s": self.wall_clock_s,
            "eval_accuracy": self.eval_accuracy,
            "eval_history": self.eval_history,
        }


class Adam:
    """Plain Adam over the model's trainable parameters."""

    def __init__(self, params: "OrderedDict[str, Tensor]", lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - (self.lr * update).astype(p.data.dtype)


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    return math.sqrt(total)


def clip_gradients(params, max_norm: float) -> float:
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def tight_box(mask: np.ndarray) -> tuple[float, float, float, float] | None:
    """Tight bounding box (x0, y0, x1, y1) of a boolean mask, or None if empty."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    return float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1)


def make_prompt_from_gt(mask: np.ndarray, rng=None, jitter: float = 0.0) -> Prompt:
    """Tight box of the instance mask, optionally jittered per side.

    Sides move by U(-jitter/2, +jitter) of the box extent (biased outward so
    the box keeps at least 80% of the instance pixels), clamped to the frame.
    """
    box = tight_box(mask)
    if box is None:
        raise ValueError("instance has no visible pixels; cannot build a prompt")
    x0, y0, x1, y1 = box
    h, w = mask.shape
    if rng is not None and jitter > 0:
        bw, bh = x1 - x0, y1 - y0
        x0 -= rng.uniform(-jitter / 2, jitter) * bw
        x1 += rng.uniform(-jitter / 2, jitter) * bw
        y0 -= rng.uniform(-jitter / 2, jitter) * bh
        y1 += rng.uniform(-jitter / 2, jitter) * bh
    x0, y0 = max(x0, 0.0), max(y0, 0.0)
    x1, y1 = min(x1, float(w)), min(y1, float(h))
    if x1 - x0 < 2.0:
        x0, x1 = max(x0 - 1, 0), min(x1 + 1, w)
    if y1 - y0 < 2.0:
        y0, y1 = max(y0 - 1, 0), min(y1 + 1, h)
    return Prompt(kind="box", box=(x0, y0, x1, y1))


def unroll_clip_batch(model: PromptableGraspNet, frames: np.ndarray, boxes: np.ndarray, n_hist: int,
                      reprompt_boxes: dict | None = None) -> list[Tensor]:
    """Forward a batch of clips through the prompted-first/tracked-rest protocol.

    frames: uint8 (B, T, H, W, 3); boxes: (B, 4) first-frame prompt boxes.
    reprompt_boxes optionally maps frame index -> (B, 4) boxes for mid-clip
    re-prompting (resets the unrolled memory, mirroring Session semantics).
    Returns one (B, H, W, 5) mask tensor per frame.
    """
    b, t_len = frames.shape[0], frames.shape[1]
    flat = frames.reshape(b * t_len, *frames.shape[2:])
    embs = model.encode(flat)
    h, w, d = model.config.grid_h, model.config.grid_w, model.config.embed_dim
    embs = embs.reshape(b, t_len, h, w, d)

    entries: list = []
    preds: list[Tensor] = []
    for t in range(t_len):
        emb_t = embs[:, t]
        boxes_t = boxes if t == 0 else (reprompt_boxes or {}).get(t)
        if boxes_t is not None:
            entries = []
            tokens = model.box_tokens(np.asarray(boxes_t))
            mask, ptr = model.decode(emb_t, tokens)
        else:
            mem = model.memory_tokens(entries[-n_hist:])
            fused = model.fuse(mem, emb_t)
            mask, ptr = model.decode(fused, None)
        pos_prob = ad.sigmoid(mask[..., 0])
        entries.append((emb_t, pos_prob, ptr))
        preds.append(mask)
    return preds


@dataclass
class _LoadedClip:
    frames: np.ndarray    # (T, H, W, 3) uint8
    targets: np.ndarray   # (T, H, W, 5) float32
    box: tuple            # tight first-frame box of the target
    frame_boxes: list     # per-frame tight box or None
    clip_id: str = ""


def load_training_clips(dataset_dir, n_clip: int) -> tuple[list[_LoadedClip], DatasetReader]:
    reader = DatasetReader(dataset_dir)
    clips = []
    for clip in reader:
        if clip.length < n_clip:
            raise TrainingDiverged(
                f"{clip.clip_id}: clip length {clip.length} shorter than n_clip={n_clip}"
            )
        target = clip.target_id
        frame_boxes = [tight_box(clip.annotations[t][target].visible_mask) for t in range(n_clip)]
        if frame_boxes[0] is None:
            raise TrainingDiverged(f"{clip.clip_id}: target {target} invisible on the prompt frame")
        targets = target_clip_stack(clip, target)[:n_clip]
        clips.append(
            _LoadedClip(
                frames=np.stack(clip.frames[:n_clip]),
                targets=targets,
                box=frame_boxes[0],
                frame_boxes=frame_boxes,
                clip_id=clip.clip_id,
            )
        )
    return clips, reader


def train(
    dataset_dir,
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    loss_cfg: LossConfig | None = None,
    out_dir=None,
    eval_dir=None,
    eval_fn=None,
    log=None,
) -> tuple[Path | None, PromptableGraspNet, TrainReport]:
    """Train from a dataset directory; returns (checkpoint path, model, report).

    `eval_fn(model) -> float accuracy` is invoked per `eval_every` epochs and
    at the end when provided (the benchmark module supplies one); `eval_dir`
    is recorded in the checkpoint meta for provenance.
    """
    loss_cfg = loss_cfg or LossConfig()
    clips, reader = load_training_clips(dataset_dir, cfg.n_clip)
    if not clips:
        raise TrainingDiverged(f"dataset {dataset_dir} has no clips")

    model_cfg = model_cfg or ModelConfig(
        frame_height=reader.scene.height, frame_width=reader.scene.width, mem_capacity=cfg.n_hist
    )
    model = PromptableGraspNet(model_cfg)
    opt = Adam(model.trainable(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    curves: dict[str, list] = {k: [] for k in ("pos", "ang", "wid", "sem", "total")}
    eval_history: list = []
    csv_rows = []
    t_start = time.perf_counter()

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(clips))
        sums = {k: 0.0 for k in curves}
        n_batches = 0
        for lo in range(0, len(order), cfg.batch_clips):
            idx = order[lo : lo + cfg.batch_clips]
            batch = [clips[i] for i in idx]
            frames = np.stack([c.frames for c in batch])
            targets = np.stack([c.targets for c in batch])  # (B, T, H, W, 5)
            boxes = np.stack(
                [make_prompt_from_gt_box(c.box, rng, cfg.prompt_jitter, c.frames.shape[1:3]) for c in batch]
            )
            reprompt = {}
            if cfg.re_prompt_fraction > 0:
                for t in range(1, cfg.n_clip):
                    if rng.random() < cfg.re_prompt_fraction and all(c.frame_boxes[t] for c in batch):
                        reprompt[t] = np.stack([np.asarray(c.frame_boxes[t], dtype=float) for c in batch])

            preds = unroll_clip_batch(model, frames, boxes, cfg.n_hist, reprompt or None)
            report = clip_loss(preds, [targets[:, t] for t in range(cfg.n_clip)], loss_cfg)
            if not math.isfinite(report.total):
                _dump_divergence(out_dir, epoch, report, [c.clip_id for c in batch])
                raise TrainingDiverged(f"non-finite loss {report.total} at epoch {epoch}")
            opt.zero_grad()
            report.total_node.backward()
            clip_gradients(opt.params, cfg.grad_clip)
            opt.step()

            sums["pos"] += report.pos
            sums["ang"] += report.ang
            sums["wid"] += report.wid
            sums["sem"] += report.semantic
            sums["total"] += report.total
            n_batches += 1

        for k in curves:
            curves[k].append(sums[k] / n_batches)
        acc = None
        if eval_fn is not None and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            acc = float(eval_fn(model))
            eval_history.append({"epoch": epoch, "accuracy": acc})
        csv_rows.append([epoch, curves["pos"][-1], curves["ang"][-1], curves["wid"][-1],
                         curves["sem"][-1], curves["total"][-1], "" if acc is None else f"{acc:.4f}"])
        if log:
            log(f"epoch {epoch:3d}  total {curves['total'][-1]:.4f}"
                + (f"  acc {acc:.3f}" if acc is not None else ""))
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            _save(model, out_dir / f"checkpoint_epoch{epoch:04d}.bin", reader, cfg, eval_dir)

    final_acc = None
    if eval_fn is not None:
        final_acc = float(eval_fn(model))
        eval_history.append({"epoch": cfg.epochs - 1, "accuracy": final_acc})
        if csv_rows:
            csv_rows[-1][-1] = f"{final_acc:.4f}"

    report = TrainReport(
        epochs=cfg.epochs,
        curves=curves,
        wall_clock_s=time.perf_counter() - t_start,
        eval_accuracy=final_acc,
        eval_history=eval_history,
    )

    ckpt_path = None
    if out_dir is not None:
        ckpt_path = out_dir / "checkpoint.bin"
        _save(model, ckpt_path, reader, cfg, eval_dir)
        with open(out_dir / "train_log.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "pos", "ang", "wid", "sem", "total", "acc"])
            writer.writerows(csv_rows)
        with open(out_dir / "train_report.json", "w") as f:
            json.dump(report.as_dict(), f, indent=2)
    return ckpt_path, model, report


def make_prompt_from_gt_box(box, rng, jitter, frame_hw) -> np.ndarray:
    """Jitter a precomputed tight box exactly like make_prompt_from_gt."""
    x0, y0, x1, y1 = box
    h, w = frame_hw
    if jitter > 0:
        bw, bh = x1 - x0, y1 - y0
        x0 -= rng.uniform(-jitter / 2, jitter) * bw
        x1 += rng.uniform(-jitter / 2, jitter) * bw
        y0 -= rng.uniform(-jitter / 2, jitter) * bh
        y1 += rng.uniform(-jitter / 2, jitter) * bh
    x0, y0 = max(x0, 0.0), max(y0, 0.0)
    x1, y1 = min(x1, float(w)), min(y1, float(h))
    return np.array([x0, y0, x1, y1], dtype=np.float64)


def _save(model, path, reader, cfg, eval_dir) -> None:
    model.save(
        path,
        extra_meta={
            "w_max": reader.w_max,
            "train": asdict(cfg),
            "eval_dir": str(eval_dir) if eval_dir else None,
        },
    )


def _dump_divergence(out_dir, epoch, report, clip_ids) -> None:
    if out_dir is None:
        return
    with open(Path(out_dir) / "divergence_dump.json", "w") as f:
        json.dump({"epoch": epoch, "loss": report.as_dict(), "clips": clip_ids}, f, indent=2)
