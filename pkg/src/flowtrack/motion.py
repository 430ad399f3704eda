"""
Motion fields and flow-compensated box warping
==============================================

A :class:`MotionField` maps a position in frame ``t-1`` to its displacement
into frame ``t`` (forward flow).  Boxes are carried forward by adding the
displacement sampled at the top-left corner to ``(x1, y1)`` and the one
sampled at the bottom-right corner to ``(x2, y2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .geometry import BBox

DENSE_GRID = "dense_grid"
CONSTANT = "constant"
AFFINE = "affine"

MOTION_MODES = ("none", "always_flow", "flow_on_trigger")


@dataclass(frozen=True, eq=False)
class MotionField:
    """Queryable displacement field.

    Use the :meth:`dense`, :meth:`constant` and :meth:`affine` constructors.
    For a dense field ``flow`` has shape ``(height, width, 2)`` holding
    ``(u, v)`` per pixel, row-major like the ``.flo`` payload.
    """

    kind: str
    flow: np.ndarray = field(default=None, repr=False)
    uv: Tuple[float, float] = (0.0, 0.0)
    coeffs: Tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def dense(cls, flow) -> "MotionField":
        arr = np.asarray(flow, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"dense flow must have shape (height, width, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("dense flow contains non-finite values")
        arr.setflags(write=False)
        return cls(DENSE_GRID, flow=arr)

    @classmethod
    def constant(cls, u: float, v: float) -> "MotionField":
        if not (np.isfinite(u) and np.isfinite(v)):
            raise ValueError("constant flow must be finite")
        return cls(CONSTANT, uv=(float(u), float(v)))

    @classmethod
    def affine(cls, a, b, c, d, e, f) -> "MotionField":
        coeffs = tuple(float(x) for x in (a, b, c, d, e, f))
        if not all(np.isfinite(coeffs)):
            raise ValueError("affine coefficients must be finite")
        return cls(AFFINE, coeffs=coeffs)

    @property
    def width(self) -> int:
        return self.flow.shape[1] if self.kind == DENSE_GRID else 0

    @property
    def height(self) -> int:
        return self.flow.shape[0] if self.kind == DENSE_GRID else 0

    def __eq__(self, other):
        if not isinstance(other, MotionField):
            return NotImplemented
        if other.kind != self.kind:
            return False
        if self.kind == DENSE_GRID:
            return np.array_equal(self.flow, other.flow)
        return self.uv == other.uv and self.coeffs == other.coeffs


@dataclass(frozen=True)
class MotionPolicy:
    mode: str = "none"
    trigger_ratio: float = 0.5

    def __post_init__(self):
        if self.mode not in MOTION_MODES:
            raise ValueError(f"unknown motion mode {self.mode!r}; expected one of {MOTION_MODES}")
        if not self.trigger_ratio > 0:
            raise ValueError("trigger_ratio must be positive")


def identity_field() -> MotionField:
    return MotionField.constant(0.0, 0.0)


def sample(field: MotionField, x: float, y: float) -> Tuple[float, float]:
    """Displacement ``(u, v)`` at ``(x, y)``.

    Dense fields are bilinearly interpolated between the integer grid nodes,
    after clamping the query point into ``[0, width-1] x [0, height-1]``.
    """
    if field.kind == CONSTANT:
        return field.uv
    if field.kind == AFFINE:
        a, b, c, d, e, f = field.coeffs
        return (a * x + b * y + c, d * x + e * y + f)

    flow = field.flow
    h, w = flow.shape[:2]
    x = min(max(float(x), 0.0), w - 1.0)
    y = min(max(float(y), 0.0), h - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    top = (1.0 - fx) * flow[y0, x0] + fx * flow[y0, x1]
    bottom = (1.0 - fx) * flow[y1, x0] + fx * flow[y1, x1]
    u, v = (1.0 - fy) * top + fy * bottom
    return (float(u), float(v))


def warp_bbox(box: BBox, field: MotionField, mean_corners: bool = False) -> BBox:
    """Carry ``box`` from frame t-1 into frame t.

    By default each corner moves by the flow sampled at that corner.  With
    ``mean_corners`` the box is translated by the mean flow over its four
    corners instead.  Corners that cross over are swapped back.
    """
    if field.kind == CONSTANT:
        u, v = field.uv
        return BBox.from_corners(box.x1 + u, box.y1 + v, box.x2 + u, box.y2 + v)
    if mean_corners:
        pts = [(box.x1, box.y1), (box.x2, box.y1), (box.x1, box.y2), (box.x2, box.y2)]
        uvs = [sample(field, px, py) for px, py in pts]
        u = sum(p[0] for p in uvs) / 4.0
        v = sum(p[1] for p in uvs) / 4.0
        return BBox.from_corners(box.x1 + u, box.y1 + v, box.x2 + u, box.y2 + v)
    u1, v1 = sample(field, box.x1, box.y1)
    u2, v2 = sample(field, box.x2, box.y2)
    return BBox.from_corners(box.x1 + u1, box.y1 + v1, box.x2 + u2, box.y2 + v2)


def should_run_flow(n_matched: int, n_unmatched: int, policy: MotionPolicy) -> bool:
    """Decide whether this frame needs flow compensation.

    ``flow_on_trigger`` fires when the unmatched count strictly exceeds
    ``trigger_ratio`` times the matched count.
    """
    if policy.mode == "none":
        return False
    if policy.mode == "always_flow":
        return True
    return n_unmatched > policy.trigger_ratio * n_matched
