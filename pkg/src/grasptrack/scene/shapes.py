"""Object-frame geometry for the synthetic desk objects.

Each shape is a union of convex polygons (plus an optional disc) minus
notch polygons, together with grasp templates expressed in the object
frame. Templates rotate and translate rigidly with the object; widths
scale with the object scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SHAPE_KINDS = ("bar", "tee", "ell", "disc")

# object scale multiplier range; extents stay small enough for 48px+ frames
SCALE_RANGE = (0.75, 1.10)

PALETTE = (
    (225, 70, 70),
    (70, 200, 90),
    (80, 120, 235),
    (235, 205, 70),
    (205, 95, 215),
)
BACKGROUND = (38, 40, 46)
BAFFLE_COLOR = (142, 142, 152)


@dataclass(frozen=True)
class GraspTemplate:
    x: float
    y: float
    theta: float
    width: float


@dataclass
class ShapeSpec:
    kind: str
    polys: list = field(default_factory=list)      # convex CCW vertex arrays, object frame
    notches: list = field(default_factory=list)    # polygons subtracted from the union
    disc_radius: float = 0.0                       # disc centered at origin when > 0
    templates: list = field(default_factory=list)  # GraspTemplate list
    max_extent: float = 0.0                        # circumscribed radius, px


def _rect(x0, y0, x1, y1) -> np.ndarray:
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=np.float64)


def make_shape(kind: str, scale: float = 1.0) -> ShapeSpec:
    if kind == "bar":
        spec = ShapeSpec(
            kind=kind,
            polys=[_rect(-13, -4, 13, 4)],
            templates=[
                GraspTemplate(-6.0, 0.0, math.pi / 2, 16.0),
                GraspTemplate(6.0, 0.0, math.pi / 2, 16.0),
            ],
            max_extent=13.7,
        )
    elif kind == "tee":
        spec = ShapeSpec(
            kind=kind,
            polys=[_rect(-11, -10, 11, -3), _rect(-3.5, -3, 3.5, 12)],
            templates=[
                GraspTemplate(0.0, 5.0, 0.0, 14.0),
                GraspTemplate(0.0, -6.5, math.pi / 2, 14.0),
            ],
            max_extent=15.0,
        )
    elif kind == "ell":
        spec = ShapeSpec(
            kind=kind,
            polys=[_rect(-9, -11, -2, 11), _rect(-2, 4, 9, 11)],
            templates=[
                GraspTemplate(-5.5, -3.0, 0.0, 14.0),
                GraspTemplate(3.5, 7.5, math.pi / 2, 14.0),
            ],
            max_extent=14.3,
        )
    elif kind == "disc":
        # A bitten disc accepts any diameter grasp whose jaws avoid the bite:
        # with the bite subtending ~60 degrees of rim, the valid jaw-axis band
        # is 90 +- 60 degrees. Three concentric templates at 60/90/120 degrees
        # (each scored with the 30-degree tolerance) cover exactly that band,
        # like the multi-rectangle ground truth of the real benchmarks.
        # Strip painting is later-wins, so the 120-degree grasp owns the
        # overlap; the others remain valid score references.
        spec = ShapeSpec(
            kind=kind,
            disc_radius=9.0,
            notches=[_rect(4, -4.5, 11, 4.5)],
            templates=[
                GraspTemplate(-2.0, 0.0, math.radians(60.0), 18.0),
                GraspTemplate(-2.0, 0.0, math.radians(90.0), 18.0),
                GraspTemplate(-2.0, 0.0, math.radians(120.0), 18.0),
            ],
            max_extent=9.0,
        )
    else:
        raise ValueError(f"unknown shape kind {kind!r} (known: {SHAPE_KINDS})")
    if scale != 1.0:
        spec.polys = [p * scale for p in spec.polys]
        spec.notches = [p * scale for p in spec.notches]
        spec.disc_radius *= scale
        spec.templates = [
            GraspTemplate(t.x * scale, t.y * scale, t.theta, t.width * scale) for t in spec.templates
        ]
        spec.max_extent *= scale
    return spec


def _inside_convex(px: np.ndarray, py: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Point-in-convex-polygon via half-plane tests; winding handled by area sign."""
    v = poly
    area2 = 0.0
    n = len(v)
    for i in range(n):
        x0, y0 = v[i]
        x1, y1 = v[(i + 1) % n]
        area2 += x0 * y1 - x1 * y0
    sign = 1.0 if area2 >= 0 else -1.0
    inside = np.ones(px.shape, dtype=bool)
    for i in range(n):
        x0, y0 = v[i]
        x1, y1 = v[(i + 1) % n]
        cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        inside &= sign * cross >= 0
    return inside


def rasterize_shape(spec: ShapeSpec, pose: tuple[float, float, float], height: int, width: int) -> np.ndarray:
    """Boolean mask of the shape at pose (x, y, phi) on pixel centers."""
    x, y, phi = pose
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    px, py = np.meshgrid(xs, ys)
    # transform pixel coords into the object frame
    c, s = math.cos(phi), math.sin(phi)
    dx, dy = px - x, py - y
    ox = c * dx + s * dy
    oy = -s * dx + c * dy
    mask = np.zeros((height, width), dtype=bool)
    for poly in spec.polys:
        mask |= _inside_convex(ox, oy, poly)
    if spec.disc_radius > 0:
        mask |= ox * ox + oy * oy <= spec.disc_radius**2
    for poly in spec.notches:
        mask &= ~_inside_convex(ox, oy, poly)
    return mask
