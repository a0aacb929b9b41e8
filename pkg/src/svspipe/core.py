"""Shared primitives: motion bitmaps, projections, boxes, moments and IoU.

Coordinates are fixed project-wide: x is the column in [0, 160), y is the
row in [0, 120), origin at the top-left. Boxes are inclusive on both ends,
so a single-pixel box has area 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

ROWS = 120
COLS = 160


class MotionBitmap:
    """Binary grid of hot-pixels (1) and inactive pixels (0).

    Immutable: the underlying array is copied and marked read-only.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.uint8, copy=True)
        if arr.shape != (ROWS, COLS):
            raise ValueError(f"motion bitmap must be {ROWS}x{COLS}, got {arr.shape}")
        self._init(arr)

    def _init(self, arr: np.ndarray) -> None:
        if arr.ndim != 2:
            raise ValueError("motion bitmap must be two-dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("motion bitmap cells must be 0 or 1")
        arr.setflags(write=False)
        self._bits = arr

    @classmethod
    def with_dims(cls, bits) -> "MotionBitmap":
        """Build a bitmap of arbitrary size (small test grids)."""
        obj = cls.__new__(cls)
        obj._init(np.array(bits, dtype=np.uint8, copy=True))
        return obj

    @classmethod
    def zeros(cls, rows: int = ROWS, cols: int = COLS) -> "MotionBitmap":
        return cls.with_dims(np.zeros((rows, cols), dtype=np.uint8))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def rows(self) -> int:
        return self._bits.shape[0]

    @property
    def cols(self) -> int:
        return self._bits.shape[1]

    def popcount(self) -> int:
        return int(self._bits.sum())

    def __getitem__(self, rc):
        return int(self._bits[rc])

    def __eq__(self, other) -> bool:
        if not isinstance(other, MotionBitmap):
            return NotImplemented
        return self._bits.shape == other._bits.shape and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((self._bits.shape, self._bits.tobytes()))

    def __repr__(self) -> str:
        return f"MotionBitmap({self.rows}x{self.cols}, hot={self.popcount()})"


@dataclass(frozen=True)
class ProjectionPair:
    xproj: np.ndarray  # per-column hot-pixel count
    yproj: np.ndarray  # per-row hot-pixel count


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive box. Detector boxes hold ints; Kalman predictions may be fractional."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"degenerate box {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> float:
        return self.y1 - self.y0 + 1

    def area(self) -> float:
        return self.width * self.height

    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2

    def as_tuple(self) -> tuple:
        return (self.x0, self.y0, self.x1, self.y1)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        hw, hh = (w - 1) / 2, (h - 1) / 2
        return cls(cx - hw, cy - hh, cx + hw, cy + hh)


@dataclass(frozen=True)
class Moments:
    """Zeroth/first/second moments of the hot-pixels inside a box.

    When ``m00 == 0`` the centroid and variances are meaningless and
    ``defined`` is False; they are stored as 0.0 only to keep the type flat.
    """

    m00: int
    cx: float
    cy: float
    var_x: float
    var_y: float
    defined: bool = True

    @classmethod
    def undefined(cls) -> "Moments":
        return cls(0, 0.0, 0.0, 0.0, 0.0, defined=False)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x1, b.x1) - max(a.x0, b.x0) + 1
    ih = min(a.y1, b.y1) - max(a.y0, b.y0) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area() + b.area() - inter)


def project(bm: MotionBitmap) -> ProjectionPair:
    bits = bm.bits.astype(np.int64)
    return ProjectionPair(xproj=bits.sum(axis=0), yproj=bits.sum(axis=1))


def box_slice(bm: MotionBitmap, box: BoundingBox) -> np.ndarray:
    x0, y0, x1, y1 = (int(v) for v in box.as_tuple())
    if x0 < 0 or y0 < 0 or x1 >= bm.cols or y1 >= bm.rows:
        raise ValueError(f"box {box.as_tuple()} outside {bm.rows}x{bm.cols} bitmap")
    return bm.bits[y0 : y1 + 1, x0 : x1 + 1]


def moments(bm: MotionBitmap, box: BoundingBox) -> Moments:
    patch = box_slice(bm, box)
    ys, xs = np.nonzero(patch)
    m00 = int(xs.size)
    if m00 == 0:
        return Moments.undefined()
    # raw sums relative to the box origin keep the one-pass variance well conditioned
    sx, sy = float(xs.sum()), float(ys.sum())
    sxx, syy = float((xs * xs).sum()), float((ys * ys).sum())
    mx, my = sx / m00, sy / m00
    var_x = max(sxx / m00 - mx * mx, 0.0)
    var_y = max(syy / m00 - my * my, 0.0)
    return Moments(m00, mx + box.x0, my + box.y0, var_x, var_y)


def tight_box(bm: MotionBitmap) -> Optional[BoundingBox]:
    """Tight bounds of every hot-pixel, or None for an empty bitmap."""
    ys, xs = np.nonzero(bm.bits)
    if xs.size == 0:
        return None
    return BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
