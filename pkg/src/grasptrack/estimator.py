"""Scikit-learn style facade over the tracker.

`PromptableGraspEstimator` wraps dataset-directory training (`fit`),
per-clip grasp prediction (`predict`) and benchmark scoring (`score`)
behind the standard estimator API, so the tracker drops into sklearn
tooling (get_params/set_params, clone, grid search over the desk-scale
hyperparameters).
"""

from __future__ import annotations

import numbers
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import DecodeConfig, EvalConfig, ModelConfig, TrainConfig
from .memory import Session
from .model import Prompt, PromptableGraspNet


def check_frames(X, frame_height: int | None = None, frame_width: int | None = None) -> np.ndarray:
    """Validate a clip array: (T, H, W, 3), uint8 or float in [0, 255]."""
    arr = np.asarray(X)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ValueError(f"expected frames shaped (T, H, W, 3), got {arr.shape}")
    if arr.dtype.kind == "f":
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("float frames must lie in [0, 255]")
    elif arr.dtype != np.uint8:
        raise ValueError(f"frames must be uint8 or float, got {arr.dtype}")
    if frame_height is not None and arr.shape[1:3] != (frame_height, frame_width):
        raise ValueError(f"frames are {arr.shape[1]}x{arr.shape[2]}, model expects {frame_height}x{frame_width}")
    return arr


def as_prompt(prompt) -> Prompt:
    if isinstance(prompt, Prompt):
        return prompt
    if isinstance(prompt, (tuple, list)) and len(prompt) == 4:
        return Prompt(kind="box", box=tuple(float(v) for v in prompt))
    if isinstance(prompt, (tuple, list)) and len(prompt) == 2:
        return Prompt(kind="point", point=tuple(float(v) for v in prompt))
    raise ValueError(f"prompt must be a Prompt, a 4-box or a 2-point, got {prompt!r}")


class PromptableGraspEstimator(BaseEstimator):
    """fit(dataset_dir) / predict(frames, prompt) / score(dataset_dir)."""

    def __init__(
        self,
        n_hist: int = 8,
        n_clip: int = 8,
        epochs: int = 40,
        learning_rate: float = 5.0e-4,
        batch_clips: int = 8,
        seed: int = 0,
        prompt_interval: int = 8,
        peak_threshold: float = 0.5,
        nms_radius: int = 4,
        max_grasps: int = 5,
    ):
        self.n_hist = n_hist
        self.n_clip = n_clip
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_clips = batch_clips
        self.seed = seed
        self.prompt_interval = prompt_interval
        self.peak_threshold = peak_threshold
        self.nms_radius = nms_radius
        self.max_grasps = max_grasps

    # -- persistence helpers -------------------------------------------------

    def _decode_cfg(self, w_max: float) -> DecodeConfig:
        return DecodeConfig(
            peak_threshold=self.peak_threshold,
            nms_radius=self.nms_radius,
            max_grasps=self.max_grasps,
            w_max=w_max,
        )

    @classmethod
    def from_checkpoint(cls, path) -> "PromptableGraspEstimator":
        est = cls()
        est.model_, meta = PromptableGraspNet.load(path)
        est.w_max_ = float(meta.get("w_max", 40.0))
        train_meta = meta.get("train") or {}
        if "n_hist" in train_meta:
            est.n_hist = int(train_meta["n_hist"])
        return est

    def save_checkpoint(self, path) -> None:
        self._require_fitted()
        self.model_.save(path, extra_meta={"w_max": self.w_max_})

    # -- estimator API ---------------------------------------------------------

    def fit(self, X, y=None):
        """Train on a generated dataset directory (the `gen` CLI output)."""
        from .scene import DatasetReader
        from .training import train

        if not isinstance(X, (str, Path)):
            raise ValueError("fit expects a dataset directory path produced by the scene generator")
        reader = DatasetReader(X)
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            batch_clips=self.batch_clips,
            epochs=self.epochs,
            n_clip=self.n_clip,
            n_hist=self.n_hist,
            seed=self.seed,
        )
        model_cfg = ModelConfig(
            frame_height=reader.scene.height,
            frame_width=reader.scene.width,
            mem_capacity=max(8, self.n_hist),
        )
        _, self.model_, self.train_report_ = train(X, cfg, model_cfg=model_cfg)
        self.w_max_ = reader.w_max
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError("estimator is not fitted; call fit() or from_checkpoint()")

    def predict(self, X, prompt=None):
        """Grasps per frame for one clip; `prompt` designates the target.

        `prompt` is a Prompt / box / point applied to the first frame, or a
        per-frame list (None entries track from memory).
        """
        self._require_fitted()
        cfg = self.model_.config
        frames = check_frames(X, cfg.frame_height, cfg.frame_width)
        if prompt is None:
            raise ValueError("predict needs a prompt designating the target instance")
        if isinstance(prompt, (list,)) and len(prompt) == len(frames):
            schedule = [as_prompt(p) if p is not None else None for p in prompt]
        else:
            schedule = [as_prompt(prompt)] + [None] * (len(frames) - 1)
        session = Session(self.model_, n_hist=self.n_hist, decode_cfg=self._decode_cfg(self.w_max_))
        return [session.step(frame, p)[1] for frame, p in zip(frames, schedule)]

    def score(self, X, y=None) -> float:
        """Frame accuracy of the rectangle metric over a dataset directory."""
        from .bench import evaluate

        self._require_fitted()
        cfg = EvalConfig(prompt_interval=self.prompt_interval, n_hist=self.n_hist)
        return evaluate(self.model_, X, cfg, self._decode_cfg(self.w_max_)).accuracy
