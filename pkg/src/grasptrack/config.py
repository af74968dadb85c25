"""Experiment configuration: typed sections, INI files, dotted overrides.

A config file is standard INI with one section per subsystem:

    [scene]
    height = 64
    n_objects_max = 3

    [train]
    epochs = 40

Every key must match a dataclass field; unknown keys are rejected so typos
cannot silently fall back to defaults. `effective_dict()` is echoed by the
CLI for provenance.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class SceneConfig:
    height: int = 64
    width: int = 64
    n_frames: int = 8
    n_objects_min: int = 1
    n_objects_max: int = 3
    speed_max: float = 1.6          # px/frame
    spin_max: float = 0.035         # rad/frame
    margin: int = 15                # keep object centers this far from the border
    occlusion_prob: float = 0.0     # fraction of clips containing a baffle event
    occlusion_min: int = 1          # occlusion duration range, frames
    occlusion_max: int = 4
    noise: float = 4.0              # uint8 pixel noise std
    w_max: float = 40.0             # dataset-level grasp width normalizer


@dataclass
class DatasetConfig:
    n_clips: int = 200
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)


@dataclass
class ModelConfig:
    frame_height: int = 64
    frame_width: int = 64
    embed_dim: int = 64
    num_heads: int = 4
    decoder_layers: int = 2
    pointer_dim: int = 64
    enc_channels: tuple = (16, 32, 64)
    head_channels: tuple = (32, 16, 8)
    mem_capacity: int = 8           # recency-embedding slots; >= eval N_hist
    fourier_scale: float = 3.0      # std of the shared positional frequency matrix
    init_seed: int = 0

    @property
    def grid_h(self) -> int:
        return self.frame_height // 8

    @property
    def grid_w(self) -> int:
        return self.frame_width // 8


@dataclass
class LossConfig:
    # per-channel weights and clamp ceilings for the balanced BCE ratio
    w_pos: float = 5.0
    w_cos: float = 5.0
    w_sin: float = 5.0
    w_wid: float = 1.0
    w_sem: float = 1.0
    beta_pos: float = 20.0
    beta_wid: float = 10.0
    beta_sem: float = 5.0


@dataclass
class TrainConfig:
    learning_rate: float = 5.0e-4
    batch_clips: int = 8
    epochs: int = 40
    n_clip: int = 8
    n_hist: int = 8
    seed: int = 0
    prompt_jitter: float = 0.10     # box jitter fraction per side during training
    re_prompt_fraction: float = 0.0  # fraction of non-first frames prompted (0 = first frame only)
    grad_clip: float = 1.0
    checkpoint_every: int = 0       # epochs between snapshots; 0 = final only
    eval_every: int = 0             # epochs between held-out evals; 0 = final only


@dataclass
class DecodeConfig:
    peak_threshold: float = 0.5
    nms_radius: int = 4
    max_grasps: int = 5
    w_max: float = 40.0
    smooth_sigma: float = 2.0       # px of Gaussian applied before peak finding
    # The balanced BCE trains the width channel toward odds(q) = beta * odds(p)
    # (the negative/positive ratio clamps at beta_wid on these scenes), so the
    # decoder removes that constant log-odds bias to read the width fraction.
    width_logit_bias: float = 2.302585092994046  # ln(beta_wid) = ln(10)
    angle_window: int = 4           # px radius of the probability-weighted angle readout

    def __post_init__(self):
        if not (0.0 < self.peak_threshold < 1.0):
            raise ConfigError(f"peak_threshold must be in (0,1), got {self.peak_threshold}")
        if self.nms_radius < 1:
            raise ConfigError(f"nms_radius must be >= 1, got {self.nms_radius}")


@dataclass
class EvalConfig:
    prompt_interval: int = 8        # 0 means first-frame-only
    n_hist: int = 8
    iou_threshold: float = 0.25
    angle_threshold_deg: float = 30.0
    seed: int = 0
    memory_enabled: bool = True
    max_sequences: int = 0          # 0 = all


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def scene(self) -> SceneConfig:
        return self.dataset.scene


_SECTIONS = {
    "scene": ("dataset", "scene"),
    "dataset": ("dataset",),
    "model": ("model",),
    "loss": ("loss",),
    "train": ("train",),
    "decode": ("decode",),
    "eval": ("eval",),
}


def _coerce(raw: str, typ, key: str):
    raw = raw.strip()
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is tuple:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r} as {typ.__name__}") from None


def _resolve_section(cfg: ExperimentConfig, section: str):
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section [{section}] (known: {', '.join(sorted(_SECTIONS))})")
    obj = cfg
    for attr in _SECTIONS[section]:
        obj = getattr(obj, attr)
    return obj


def _set_key(cfg: ExperimentConfig, section: str, key: str, raw: str) -> None:
    obj = _resolve_section(cfg, section)
    # dataset.scene is nested; let [dataset] also reach scene-free keys only
    fmap = {f.name: f for f in fields(obj) if f.name != "scene"}
    if key not in fmap:
        raise ConfigError(f"unknown key '{key}' in section [{section}] (known: {', '.join(sorted(fmap))})")
    current = getattr(obj, key)
    typ = type(current) if current is not None else str
    setattr(obj, key, _coerce(raw, typ, f"{section}.{key}"))


def load_config(path=None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from an optional INI file plus dotted overrides.

    Overrides look like "train.epochs=12" and are applied after the file.
    """
    cfg = ExperimentConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as e:
            raise ConfigError(f"malformed config {path}: {e}") from None
        for section in parser.sections():
            for key, raw in parser.items(section):
                _set_key(cfg, section, key, raw)
    for ov in overrides or []:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        dotted, raw = ov.split("=", 1)
        section, key = dotted.split(".", 1)
        _set_key(cfg, section.strip(), key.strip(), raw)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    sc = cfg.scene
    if sc.height % 8 or sc.width % 8:
        raise ConfigError(f"frame size must be divisible by 8, got {sc.height}x{sc.width}")
    if sc.height < 32 or sc.width < 32:
        raise ConfigError("frames smaller than 32x32 cannot hold the desk-scale objects")
    if not (1 <= sc.n_objects_min <= sc.n_objects_max <= 4):
        raise ConfigError(f"object count range must satisfy 1 <= min <= max <= 4, got {sc.n_objects_min}..{sc.n_objects_max}")
    if 2 * sc.margin >= min(sc.height, sc.width):
        raise ConfigError("margin leaves no room for object motion; object larger than frame?")
    if cfg.train.n_clip < 1:
        raise ConfigError("n_clip must be >= 1")
    if cfg.train.learning_rate <= 0:
        raise ConfigError("learning_rate must be > 0")
    if cfg.model.frame_height != sc.height or cfg.model.frame_width != sc.width:
        raise ConfigError(
            f"model frame {cfg.model.frame_height}x{cfg.model.frame_width} "
            f"differs from scene {sc.height}x{sc.width}"
        )


def effective_dict(cfg: ExperimentConfig) -> dict:
    """Flat provenance dump of every effective setting."""
    out = {}
    for section in ("scene", "dataset", "model", "loss", "train", "decode", "eval"):
        obj = _resolve_section(cfg, section)
        for f in fields(obj):
            if f.name == "scene":
                continue
            out[f"{section}.{f.name}"] = getattr(obj, f.name)
    return out


def scene_to_dict(sc: SceneConfig) -> dict:
    return dataclasses.asdict(sc)


def scene_from_dict(d: dict) -> SceneConfig:
    known = {f.name for f in fields(SceneConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown scene keys in dataset header: {sorted(unknown)}")
    return SceneConfig(**d)
