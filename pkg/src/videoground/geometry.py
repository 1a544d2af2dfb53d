"""Axis-aligned box algebra: IoU, generalized IoU, greedy NMS, and box refinement deltas.

Boxes are corner-form (x1, y1, x2, y2), normally normalized to the unit square.
Coordinates outside [0, 1] are legal until explicitly clamped; only the corner
ordering and finiteness are enforced by the type itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with x1 <= x2 and y1 <= y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"box corners are inverted: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def area(self) -> float:
        return self.width * self.height

    def center_size(self) -> tuple[float, float, float, float]:
        """Return (cx, cy, w, h)."""
        return (
            (self.x1 + self.x2) / 2.0,
            (self.y1 + self.y2) / 2.0,
            self.width,
            self.height,
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class ScoredBox:
    """A box with a confidence score in [0, 1]."""

    box: Box
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class BoxDelta:
    """Additive refinement offsets in center/size form: (dcx, dcy, dw, dh)."""

    dcx: float
    dcy: float
    dw: float
    dh: float

    def __post_init__(self):
        parts = (self.dcx, self.dcy, self.dw, self.dh)
        if not all(math.isfinite(p) for p in parts):
            raise ValueError(f"delta components must be finite, got {parts}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.dcx, self.dcy, self.dw, self.dh)


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0.0 by convention when the union has zero area."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _giou_raw(a: Box, b: Box) -> float:
    """GIoU without degeneracy checks; 0.0 when even the enclosure is empty."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area() + b.area() - inter
    enclosure = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    if union <= 0.0 or enclosure <= 0.0:
        return 0.0
    return inter / union - (enclosure - union) / enclosure


def giou(a: Box, b: Box) -> float:
    """Generalized IoU: IoU minus the empty fraction of the smallest enclosing box.

    Lies in (-1, 1]; equals IoU when one box contains the other and 1 only for
    identical boxes. Degenerate (zero-area) inputs are rejected.
    """
    if a.area() <= 0.0 or b.area() <= 0.0:
        raise ValueError("giou requires boxes with positive area")
    return _giou_raw(a, b)


def nms(candidates: Sequence[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy non-maximum suppression.

    Candidates are visited in descending score order (ties keep input order);
    a candidate survives when its IoU with every earlier survivor is at most
    `iou_threshold`. Survivors come back in that same visiting order.
    """
    if not math.isfinite(iou_threshold) or not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    order = sorted(range(len(candidates)), key=lambda i: -candidates[i].score)
    kept: list[ScoredBox] = []
    for idx in order:
        cand = candidates[idx]
        if all(iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def clamp_box(x1: float, y1: float, x2: float, y2: float) -> Box:
    """Clamp raw corners to the unit square, collapsing inverted spans to their midpoint."""
    x1 = min(max(x1, 0.0), 1.0)
    y1 = min(max(y1, 0.0), 1.0)
    x2 = min(max(x2, 0.0), 1.0)
    y2 = min(max(y2, 0.0), 1.0)
    if x1 > x2:
        x1 = x2 = (x1 + x2) / 2.0
    if y1 > y2:
        y1 = y2 = (y1 + y2) / 2.0
    return Box(x1, y1, x2, y2)


def apply_delta(b: Box, d: BoxDelta) -> Box:
    """Apply center/size offsets to a box and clamp the result to the unit square."""
    cx, cy, w, h = b.center_size()
    cx += d.dcx
    cy += d.dcy
    w += d.dw
    h += d.dh
    return clamp_box(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
