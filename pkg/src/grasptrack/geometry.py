"""4-DoF grasp rectangles: construction, rotated IoU, angle metric, success test.

Coordinates are pixels with x = column and y = row. A grasp is parameterized
by its center, the in-plane jaw axis angle theta, and the jaw opening width.
A parallel-jaw gripper is antipodal, so theta is pi-periodic and always kept
in [-pi/2, pi/2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

# Rectangle height as a fraction of the grasp width. The 4-DoF
# parameterization leaves the rectangle height free; a fixed 1:2 aspect is
# the usual rectangle-benchmark convention and all IoU numbers depend on it.
HEIGHT_RATIO = 0.5

_HALF_PI = math.pi / 2.0


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [-pi/2, pi/2) modulo pi."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta}")
    wrapped = math.fmod(theta + _HALF_PI, math.pi)
    if wrapped < 0.0:
        wrapped += math.pi
    return wrapped - _HALF_PI


@dataclass(frozen=True)
class GraspPose:
    """One 4-DoF grasp: center (x, y), jaw axis angle, opening width, confidence."""

    x: float
    y: float
    theta: float
    width: float
    confidence: float = 1.0

    def __post_init__(self):
        if not (self.width > 0.0) or not math.isfinite(self.width):
            raise ValueError(f"grasp width must be > 0, got {self.width}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def in_frame(self, height: int, width: int) -> bool:
        return 0.0 <= self.x <= width - 1 and 0.0 <= self.y <= height - 1

    def transformed(self, dx: float, dy: float, rot: float) -> "GraspPose":
        """Rigid motion: rotate by `rot` about the origin, then translate."""
        c, s = math.cos(rot), math.sin(rot)
        return GraspPose(
            x=c * self.x - s * self.y + dx,
            y=s * self.x + c * self.y + dy,
            theta=self.theta + rot,
            width=self.width,
            confidence=self.confidence,
        )


@dataclass(frozen=True)
class GraspRect:
    """Oriented rectangle: center, half-extents along the jaw axis u and its normal v."""

    cx: float
    cy: float
    half_u: float
    half_v: float
    theta: float

    def corners(self) -> list[tuple[float, float]]:
        """Four corners traced consecutively (consistent winding)."""
        cu, su = math.cos(self.theta), math.sin(self.theta)
        ux, uy = self.half_u * cu, self.half_u * su
        vx, vy = -self.half_v * su, self.half_v * cu
        cx, cy = self.cx, self.cy
        return [
            (cx + ux + vx, cy + uy + vy),
            (cx - ux + vx, cy - uy + vy),
            (cx - ux - vx, cy - uy - vy),
            (cx + ux - vx, cy + uy - vy),
        ]

    def area(self) -> float:
        return 4.0 * self.half_u * self.half_v


def rect_from_pose(pose: GraspPose, height_ratio: float = HEIGHT_RATIO) -> GraspRect:
    """Rectangle of a grasp: width along the jaw axis, height = width * height_ratio."""
    if not (pose.width > 0.0):
        raise ValueError(f"invalid pose: width must be > 0, got {pose.width}")
    return GraspRect(
        cx=pose.x,
        cy=pose.y,
        half_u=pose.width / 2.0,
        half_v=pose.width * height_ratio / 2.0,
        theta=pose.theta,
    )


def polygon_area(poly: list[tuple[float, float]]) -> float:
    """Shoelace area (absolute value) of a simple polygon."""
    if len(poly) < 3:
        return 0.0
    acc = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return abs(acc) / 2.0


def clip_convex(subject: list[tuple[float, float]], clipper: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip a convex polygon against a convex polygon.

    The clipper must be wound counter-clockwise in the algebraic sense
    (positive cross products toward the interior); GraspRect.corners() is.
    A tiny tolerance keeps vertices that sit exactly on a clip edge, so
    clipping a polygon against itself returns it unchanged.
    """
    eps = -1e-7
    output = list(subject)
    cx1, cy1 = clipper[-1]
    for cx2, cy2 in clipper:
        if not output:
            return []
        ex, ey = cx2 - cx1, cy2 - cy1
        inputs = output
        output = []
        sx, sy = inputs[-1]
        s_in = ex * (sy - cy1) - ey * (sx - cx1) >= eps
        for px, py in inputs:
            p_in = ex * (py - cy1) - ey * (px - cx1) >= eps
            if p_in != s_in:
                # Edge crossing: intersect segment (s, p) with the clip line.
                dcx, dcy = cx1 - cx2, cy1 - cy2
                dpx, dpy = sx - px, sy - py
                n1 = cx1 * cy2 - cy1 * cx2
                n2 = sx * py - sy * px
                den = dcx * dpy - dcy * dpx
                output.append(((n1 * dpx - n2 * dcx) / den, (n1 * dpy - n2 * dcy) / den))
            if p_in:
                output.append((px, py))
            sx, sy, s_in = px, py, p_in
        cx1, cy1 = cx2, cy2
    return output


_DEGENERATE_EPS = 1e-12


def rect_iou(a: GraspRect, b: GraspRect) -> float:
    """Intersection-over-union of two oriented rectangles by exact convex clipping.

    Degenerate (zero-area) rectangles yield 0 with a warning instead of an
    error, so evaluation never crashes on pathological decodes.
    """
    # Measure all three areas with the same shoelace functional so that
    # clipping a rectangle against itself yields IoU of exactly 1.0.
    corners_a, corners_b = a.corners(), b.corners()
    area_a, area_b = polygon_area(corners_a), polygon_area(corners_b)
    if area_a <= _DEGENERATE_EPS or area_b <= _DEGENERATE_EPS:
        warnings.warn("degenerate zero-area rectangle in rect_iou; returning 0", RuntimeWarning)
        return 0.0
    inter_poly = clip_convex(corners_a, corners_b)
    if len(inter_poly) < 3:
        return 0.0
    inter = polygon_area(inter_poly)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    iou = inter / union
    # Clipping noise can land an ulp outside [0, 1].
    return min(max(iou, 0.0), 1.0)


def angle_diff(theta_a: float, theta_b: float) -> float:
    """Pi-periodic angle difference, in [0, pi/2]."""
    d = math.fmod(abs(theta_a - theta_b), math.pi)
    return min(d, math.pi - d)


def is_success(
    pred: GraspPose,
    truth: GraspPose,
    iou_threshold: float = 0.25,
    angle_threshold: float = math.radians(30.0),
) -> bool:
    """Rectangle-metric success: IoU strictly above 0.25 and angle strictly below 30 degrees."""
    if angle_diff(pred.theta, truth.theta) >= angle_threshold:
        return False
    return rect_iou(rect_from_pose(pred), rect_from_pose(truth)) > iou_threshold
