"""Pixel-space box arithmetic: bounding boxes, square crops, coordinate maps, IoU.

Everything here is pure and continuous-valued. Rasterization (pixel sampling,
padding, interpolation) is a backend concern and never happens in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MIN_CROP_SIDE = 2.0


class DegenerateBoxError(ValueError):
    """Raised when an operation needs a positive-area reference box."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, (left, top, width, height).

    Zero-area boxes are legal; a box may extend outside frame bounds until
    explicitly clipped.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box dimensions: w={self.w}, h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2

    @property
    def cy(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class FrameDims:
    """Frame size in pixels."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame dims must be >= 1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class CropSpec:
    """A square region of a frame plus its output resolution after resize.

    Defines the affine map between frame ("global") coordinates and crop
    ("local") coordinates: local = (global - origin) * scale.
    """

    center_x: float
    center_y: float
    side: float
    out_size: int
    frame: FrameDims

    def __post_init__(self) -> None:
        if self.side <= 0:
            raise ValueError(f"crop side must be > 0, got {self.side}")
        if self.out_size <= 0:
            raise ValueError(f"crop out_size must be > 0, got {self.out_size}")

    @property
    def scale(self) -> float:
        return self.out_size / self.side

    @property
    def origin_x(self) -> float:
        return self.center_x - self.side / 2

    @property
    def origin_y(self) -> float:
        return self.center_y - self.side / 2

    def as_bbox(self) -> BBox:
        """The crop square itself, in frame coordinates."""
        return BBox(self.origin_x, self.origin_y, self.side, self.side)


def make_crop(center_bbox: BBox, factor: float, out_size: int, frame: FrameDims) -> CropSpec:
    """Build a square crop centered on a box, side = factor * sqrt(w * h).

    The sqrt-area convention keeps the crop aspect-free: wide and tall boxes
    of equal area get the same search window. Side is floored at
    MIN_CROP_SIDE so downstream scale factors stay finite.
    """
    if center_bbox.area <= 0:
        raise DegenerateBoxError("degenerate reference box")
    if factor <= 0:
        raise ValueError(f"crop factor must be > 0, got {factor}")
    side = max(factor * math.sqrt(center_bbox.w * center_bbox.h), MIN_CROP_SIDE)
    return CropSpec(center_bbox.cx, center_bbox.cy, side, out_size, frame)


def local_to_global(local_bbox: BBox, crop: CropSpec) -> BBox:
    """Map a box from crop-output coordinates back to frame coordinates."""
    scale = crop.scale
    return BBox(
        crop.origin_x + local_bbox.x / scale,
        crop.origin_y + local_bbox.y / scale,
        local_bbox.w / scale,
        local_bbox.h / scale,
    )


def global_to_local(global_bbox: BBox, crop: CropSpec) -> BBox:
    """Map a box from frame coordinates into crop-output coordinates."""
    scale = crop.scale
    return BBox(
        (global_bbox.x - crop.origin_x) * scale,
        (global_bbox.y - crop.origin_y) * scale,
        global_bbox.w * scale,
        global_bbox.h * scale,
    )


def clip_to_frame(bbox: BBox, frame: FrameDims) -> BBox:
    """Intersect a box with the frame rectangle.

    An empty intersection collapses to a zero-area box pinned to the nearest
    frame-boundary point, so callers can keep flowing boxes and let
    confidence gating decide failure.
    """
    x1 = min(max(bbox.x, 0.0), float(frame.width))
    y1 = min(max(bbox.y, 0.0), float(frame.height))
    x2 = min(max(bbox.x2, 0.0), float(frame.width))
    y2 = min(max(bbox.y2, 0.0), float(frame.height))
    return BBox(x1, y1, x2 - x1, y2 - y1)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in [0, 1]; 0 when the union has zero area."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the overlap between two boxes (0 when disjoint)."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y, b.y))
    return ix * iy
