"""Dataset directory layout and (de)serialization.

    root/
      dataset.json            seed + scene config header, fully reproducible
      clip_00000/
        frame_000.png ...     8-bit RGB frames
        annotations.json      per-frame per-instance masks (RLE) and grasps

Semantic masks use run-length encoding over row-major pixel order: counts
alternate zero-runs and one-runs, starting with a zero-run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..config import ConfigError, DatasetConfig, SceneConfig, scene_from_dict, scene_to_dict
from ..geometry import GraspPose
from .generator import Clip, InstanceFrame, generate_clip

FORMAT_NAME = "grasptrack-dataset-v1"


def rle_encode(mask: np.ndarray) -> dict:
    """Row-major RLE: alternating background/foreground run lengths, background first."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return {"size": list(mask.shape), "counts": []}
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:  # must start with a zero-run
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def rle_decode(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in rle["counts"]:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    if pos != h * w:
        raise ValueError(f"RLE runs cover {pos} pixels, mask has {h * w}")
    return flat.reshape(h, w)


def _clip_dir(root: Path, index: int) -> Path:
    return root / f"clip_{index:05d}"


def clip_annotations_dict(clip: Clip) -> dict:
    frames = []
    for t in range(clip.length):
        instances = []
        for inst_id in sorted(clip.annotations[t]):
            inst = clip.annotations[t][inst_id]
            instances.append(
                {
                    "id": inst_id,
                    "semantic_rle": rle_encode(inst.visible_mask),
                    "grasps": [
                        {"x": g.x, "y": g.y, "theta": g.theta, "width": g.width} for g in inst.grasps
                    ],
                }
            )
        frames.append({"index": t, "instances": instances, "occluded": list(clip.occluded[t])})
    return {
        "clip_id": clip.clip_id,
        "w_max": clip.w_max,
        "target_id": clip.target_id,
        "occlusions": [list(o) for o in clip.occlusions],
        "frames": frames,
    }


def write_clip(clip: Clip, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(clip.frames):
        Image.fromarray(frame, mode="RGB").save(directory / f"frame_{t:03d}.png")
    with open(directory / "annotations.json", "w") as f:
        json.dump(clip_annotations_dict(clip), f)


def generate_dataset(root, cfg: DatasetConfig, n_frames: int | None = None, force: bool = False) -> Path:
    """Generate cfg.n_clips clips under root; refuses to clobber without force."""
    root = Path(root)
    if root.exists() and any(root.iterdir()):
        if not force:
            raise ConfigError(f"output directory {root} is not empty (use force to overwrite)")
    root.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_clips)
    for i, child in enumerate(children):
        clip = generate_clip(child, cfg.scene, n_frames=n_frames, clip_id=f"clip_{i:05d}")
        write_clip(clip, _clip_dir(root, i))
    header = {
        "format": FORMAT_NAME,
        "seed": cfg.seed,
        "n_clips": cfg.n_clips,
        "n_frames": int(n_frames or cfg.scene.n_frames),
        "w_max": cfg.scene.w_max,
        "scene": scene_to_dict(cfg.scene),
    }
    with open(root / "dataset.json", "w") as f:
        json.dump(header, f, indent=2)
    return root


def load_clip_dir(directory: Path, scene: SceneConfig) -> Clip:
    directory = Path(directory)
    with open(directory / "annotations.json") as f:
        ann = json.load(f)
    frames = []
    for t in range(len(ann["frames"])):
        img = Image.open(directory / f"frame_{t:03d}.png")
        frames.append(np.asarray(img, dtype=np.uint8))
    annotations = []
    occluded = []
    for frame_ann in ann["frames"]:
        inst_map: dict[int, InstanceFrame] = {}
        for inst in frame_ann["instances"]:
            mask = rle_decode(inst["semantic_rle"])
            total = mask.sum()
            grasps = [
                GraspPose(x=g["x"], y=g["y"], theta=g["theta"], width=g["width"])
                for g in inst["grasps"]
            ]
            inst_map[inst["id"]] = InstanceFrame(
                instance_id=inst["id"],
                grasps=grasps,
                visible_mask=mask,
                visible_frac=1.0 if inst["id"] not in frame_ann["occluded"] else 0.0,
            )
        annotations.append(inst_map)
        occluded.append(list(frame_ann["occluded"]))
    return Clip(
        clip_id=ann["clip_id"],
        frames=frames,
        annotations=annotations,
        occluded=occluded,
        occlusions=[tuple(o) for o in ann.get("occlusions", [])],
        target_id=ann["target_id"],
        w_max=ann["w_max"],
        scene=scene,
    )


class DatasetReader:
    """Lazy access to a generated dataset directory."""

    def __init__(self, root):
        self.root = Path(root)
        header_path = self.root / "dataset.json"
        if not header_path.exists():
            raise ConfigError(f"{self.root} is not a dataset (missing dataset.json)")
        with open(header_path) as f:
            self.header = json.load(f)
        if self.header.get("format") != FORMAT_NAME:
            raise ConfigError(f"unsupported dataset format {self.header.get('format')!r}")
        self.scene = scene_from_dict(self.header["scene"])
        self.n_clips = int(self.header["n_clips"])
        self.w_max = float(self.header["w_max"])

    def load_clip(self, index: int) -> Clip:
        if not 0 <= index < self.n_clips:
            raise IndexError(f"clip {index} out of range (dataset has {self.n_clips})")
        return load_clip_dir(_clip_dir(self.root, index), self.scene)

    def __len__(self) -> int:
        return self.n_clips

    def __iter__(self):
        for i in range(self.n_clips):
            yield self.load_clip(i)
