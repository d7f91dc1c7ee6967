"""Spatial vocabulary shared by every other module.

Boxes are axis-aligned, top-left anchored, in continuous pixel units with the
origin at the top-left of the frame and y growing downward. Area is ``w * h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class AbsentBoxError(ValueError):
    """Raised when a position is requested from the absent-box sentinel."""


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box extent: w={self.w}, h={self.h}")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def is_absent(self) -> bool:
        return self.w == 0 and self.h == 0

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        if self.is_absent:
            raise AbsentBoxError("absent box has no center")
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def moved_to(self, cx: float, cy: float) -> "BoundingBox":
        """Same size, new center."""
        return BoundingBox.from_center(cx, cy, self.w, self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


ABSENT = BoundingBox(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ObjectClass:
    """Categorical object attributes. Two classes are equal iff every tag is equal.

    ``label`` is the single-token form used in record files; tags are joined
    with ``:`` and trailing empty tags are dropped (``"hand"``,
    ``"cone:large:rubber:green"``).
    """

    shape: str
    size: str = ""
    material: str = ""
    color: str = ""

    @property
    def label(self) -> str:
        tags = [self.shape, self.size, self.material, self.color]
        while tags and not tags[-1]:
            tags.pop()
        return ":".join(tags)

    @classmethod
    def parse(cls, label: str) -> "ObjectClass":
        parts = label.split(":")
        if not parts[0] or len(parts) > 4 or any(ch.isspace() for ch in label):
            raise ValueError(f"malformed class label {label!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class Detection:
    object_class: ObjectClass
    box: BoundingBox
    frame: int

    def __post_init__(self):
        if self.box.is_absent:
            raise ValueError(f"frame {self.frame}: detection with absent box")


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union. An absent box on either side scores 0."""
    if a.is_absent or b.is_absent:
        return 0.0
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        # both degenerate (zero area) but not the sentinel
        return 1.0 if a == b else 0.0
    return min(1.0, inter / union)


def coverage(target: BoundingBox, cover: BoundingBox) -> float:
    """Fraction of ``target``'s area lying inside ``cover``."""
    if target.is_absent or cover.is_absent or target.area <= 0:
        return 0.0
    return min(1.0, intersection_area(target, cover) / target.area)


def l2_center(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance between box centers, in pixels."""
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)
