from .generator import Clip, InstanceFrame, generate_clip, OCCLUDED_VISIBILITY
from .shapes import SHAPE_KINDS, GraspTemplate, ShapeSpec, make_shape, rasterize_shape
from .targets import CH_COS, CH_POS, CH_SEM, CH_SIN, CH_WID, rasterize_targets, target_clip_stack
from .dataset import (
    DatasetReader,
    FORMAT_NAME,
    generate_dataset,
    load_clip_dir,
    rle_decode,
    rle_encode,
    write_clip,
)

__all__ = [
    "Clip",
    "InstanceFrame",
    "generate_clip",
    "OCCLUDED_VISIBILITY",
    "SHAPE_KINDS",
    "GraspTemplate",
    "ShapeSpec",
    "make_shape",
    "rasterize_shape",
    "CH_COS",
    "CH_POS",
    "CH_SEM",
    "CH_SIN",
    "CH_WID",
    "rasterize_targets",
    "target_clip_stack",
    "DatasetReader",
    "FORMAT_NAME",
    "generate_dataset",
    "load_clip_dir",
    "rle_decode",
    "rle_encode",
    "write_clip",
]
