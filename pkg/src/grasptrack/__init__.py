"""Promptable grasp tracking on synthetic video streams.

The pipeline: a scene generator renders moving desk objects with
ground-truth grasps; a compact promptable network predicts 5-channel grasp
masks per frame, tracking a user-designated instance through a FIFO
spatiotemporal memory; a decoder turns masks into ranked 4-DoF grasp
poses; a benchmark harness scores the rectangle metric, prompt-interval
sweeps, memory ablations, occlusion recovery, and per-frame latency.
"""

from .config import (
    ConfigError,
    DatasetConfig,
    DecodeConfig,
    EvalConfig,
    ExperimentConfig,
    LossConfig,
    ModelConfig,
    SceneConfig,
    TrainConfig,
    load_config,
)
from .geometry import GraspPose, GraspRect, angle_diff, is_success, rect_from_pose, rect_iou
from .decoding import MaskStack, decode, decode_batch, logits_from_targets
from .model import Prompt, PromptableGraspNet
from .memory import MemoryBank, NeedsPrompt, Session, StateVector, aggregate
from .losses import LossReport, angle_mse, balanced_bce, clip_loss

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DatasetConfig",
    "DecodeConfig",
    "EvalConfig",
    "ExperimentConfig",
    "LossConfig",
    "ModelConfig",
    "SceneConfig",
    "TrainConfig",
    "load_config",
    "GraspPose",
    "GraspRect",
    "angle_diff",
    "is_success",
    "rect_from_pose",
    "rect_iou",
    "MaskStack",
    "decode",
    "decode_batch",
    "logits_from_targets",
    "Prompt",
    "PromptableGraspNet",
    "MemoryBank",
    "NeedsPrompt",
    "Session",
    "StateVector",
    "aggregate",
    "LossReport",
    "angle_mse",
    "balanced_bce",
    "clip_loss",
    "__version__",
]
