"""
Box primitives
==============

Axis-aligned boxes in corner form ``(x1, y1, x2, y2)`` with real-valued
pixel coordinates, per-frame detections, IoU and class-agnostic NMS.

File formats store ``(left, top, width, height)``; conversion happens in
:mod:`flowtrack.io` via :meth:`BBox.from_ltwh` / :meth:`BBox.to_ltwh`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate in {self}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"negative box extent: {self}")

    @classmethod
    def from_ltwh(cls, left, top, width, height) -> "BBox":
        return cls(float(left), float(top), float(left) + float(width), float(top) + float(height))

    @classmethod
    def from_corners(cls, x1, y1, x2, y2) -> "BBox":
        """Build a box from two corners given in any order."""
        return cls(float(min(x1, x2)), float(min(y1, y2)), float(max(x1, x2)), float(max(y1, y2)))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def to_ltwh(self):
        return (self.x1, self.y1, self.width, self.height)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=float)

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def clip(self, width: float, height: float) -> Optional["BBox"]:
        """Clip to the image ``[0, width] x [0, height]``; None if nothing is left."""
        x1, y1 = min(max(self.x1, 0.0), width), min(max(self.y1, 0.0), height)
        x2, y2 = min(max(self.x2, 0.0), width), min(max(self.y2, 0.0), height)
        if x2 <= x1 or y2 <= y1:
            return None
        return BBox(x1, y1, x2, y2)


@dataclass(frozen=True)
class Detection:
    """One detector output.

    ``embedding_id`` is a key into an embedding table (see
    :mod:`flowtrack.appearance`); the loaders use ``(frame, det_index)``.
    """

    frame: int
    bbox: BBox
    score: float
    class_id: int = 1
    det_index: int = 0
    embedding_id: Optional[Hashable] = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score {self.score} outside [0, 1]")
        if self.frame < 1:
            raise ValueError(f"frame index must be 1-based, got {self.frame}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(boxes_a), len(boxes_b))``."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([bb.as_array() for bb in boxes_a])
    b = np.array([bb.as_array() for bb in boxes_b])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return np.minimum(out, 1.0)


def class_agnostic_nms(dets: Sequence[Detection], sigma_nms: float) -> list:
    """Greedy NMS ignoring ``class_id``.

    Detections are visited by descending score (ties: lower ``det_index``);
    one is kept iff its IoU with every kept detection is below ``sigma_nms``.
    Kept detections are returned in visiting order.
    """
    order = sorted(dets, key=lambda d: (-d.score, d.det_index))
    kept: list = []
    for det in order:
        if all(iou(det.bbox, k.bbox) < sigma_nms for k in kept):
            kept.append(det)
    return kept
