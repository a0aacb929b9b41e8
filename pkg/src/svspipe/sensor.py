"""Software stand-in for the background-filtering vision sensor.

Each VGA frame is subsampled to QQVGA, compared against an exponential
moving-average background, de-noised by a neighbour-count erosion and
projected onto both axes. Contiguous activity in both projections raises
the alarm, which switches the sensor from motion-detection (MD) to imaging
mode (IM) for a fixed burst of frames. Frames leave the sensor with the
motion bitmap hidden in the pixel LSBs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import COLS, ROWS, MotionBitmap, ProjectionPair, project

VGA_SHAPE = (ROWS * 4, COLS * 4)
QQVGA_SHAPE = (ROWS, COLS)


class Mode(enum.Enum):
    MD = "MD"
    IM = "IM"


@dataclass(frozen=True)
class SensorConfig:
    alpha: float = 0.05
    theta: float = 15.0
    erosion_k: int = 2
    min_run_x: int = 3
    min_run_y: int = 3
    burst_len: int = 10

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.theta < 0:
            raise ValueError("theta must be non-negative")
        if not 0 <= self.erosion_k <= 8:
            raise ValueError(f"erosion_k must be in [0, 8], got {self.erosion_k}")
        if self.min_run_x < 1 or self.min_run_y < 1:
            raise ValueError("minimum runs must be at least 1")
        if self.burst_len < 1:
            raise ValueError("burst_len must be at least 1")


@dataclass
class SensorState:
    config: SensorConfig = field(default_factory=SensorConfig)
    background: Optional[np.ndarray] = None  # float 120x160, set on the first frame
    mode: Mode = Mode.MD
    burst_remaining: int = 0
    last_bitmap: Optional[MotionBitmap] = None


@dataclass(frozen=True)
class NoEvent:
    pass


@dataclass(frozen=True)
class AlarmRaised:
    projections: ProjectionPair


@dataclass(frozen=True)
class FrameDelivered:
    frame: np.ndarray  # LSB-encoded VGA frame, or the raw frame on the QQVGA path
    bitmap: MotionBitmap


SensorEvent = Union[NoEvent, AlarmRaised, FrameDelivered]


def subsample_qqvga(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.shape != VGA_SHAPE:
        raise ValueError(f"expected a {VGA_SHAPE} VGA frame, got {frame.shape}")
    blocks = frame.astype(np.int64).reshape(ROWS, 4, COLS, 4).sum(axis=(1, 3))
    # round half up on the 16-pixel mean
    return ((blocks + 8) // 16).astype(np.uint8)


def motion_step(state: SensorState, frame: np.ndarray) -> MotionBitmap:
    """Background subtraction on one QQVGA frame; updates the background in place."""
    cur = np.asarray(frame, dtype=np.float64)
    if cur.shape != QQVGA_SHAPE:
        raise ValueError(f"expected a {QQVGA_SHAPE} frame, got {cur.shape}")
    if state.background is None:
        state.background = cur.copy()
    bg = state.background
    hot = np.abs(cur - bg) > state.config.theta
    a = state.config.alpha
    state.background = (1.0 - a) * bg + a * cur
    return MotionBitmap(hot)


def erode(bm: MotionBitmap, k: int) -> MotionBitmap:
    if not 0 <= k <= 8:
        raise ValueError(f"neighbour threshold must be in [0, 8], got {k}")
    bits = bm.bits
    if k == 0:
        return MotionBitmap.with_dims(bits)
    padded = np.pad(bits.astype(np.int16), 1)
    h, w = bits.shape
    neigh = np.zeros((h, w), dtype=np.int16)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                neigh += padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return MotionBitmap.with_dims((bits == 1) & (neigh >= k))


def longest_run(proj) -> int:
    best = cur = 0
    for v in proj:
        cur = cur + 1 if v > 0 else 0
        best = max(best, cur)
    return best


def check_alarm(pp: ProjectionPair, cfg: SensorConfig) -> bool:
    return longest_run(pp.xproj) >= cfg.min_run_x and longest_run(pp.yproj) >= cfg.min_run_y


def encode_lsb(frame: np.ndarray, bm: MotionBitmap) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.shape != VGA_SHAPE:
        raise ValueError(f"expected a {VGA_SHAPE} VGA frame, got {frame.shape}")
    if (bm.rows, bm.cols) != QQVGA_SHAPE:
        raise ValueError("bitmap must be QQVGA sized")
    out = frame.astype(np.uint8) & np.uint8(0xFE)
    out[::4, ::4] |= bm.bits
    return out


def decode_lsb(frame: np.ndarray) -> tuple[np.ndarray, MotionBitmap]:
    frame = np.asarray(frame, dtype=np.uint8)
    if frame.shape != VGA_SHAPE:
        raise ValueError(f"expected a {VGA_SHAPE} VGA frame, got {frame.shape}")
    bits = frame[::4, ::4] & 1
    return frame & np.uint8(0xFE), MotionBitmap(bits)


class SmartSensor:
    """Stateful MD/IM machine. One instance per sequence; tick() in frame order.

    Accepts VGA frames (full path, with subsampling and LSB payload) or QQVGA
    frames (direct path: the bitmap is handed over as-is).
    """

    def __init__(self, config: Optional[SensorConfig] = None):
        self.state = SensorState(config=config or SensorConfig())

    @property
    def mode(self) -> Mode:
        return self.state.mode

    def tick(self, frame: np.ndarray) -> SensorEvent:
        return sensor_tick(self.state, frame)


def sensor_tick(state: SensorState, frame: np.ndarray) -> SensorEvent:
    frame = np.asarray(frame)
    vga = frame.shape == VGA_SHAPE
    small = subsample_qqvga(frame) if vga else frame
    cfg = state.config
    bm = erode(motion_step(state, small), cfg.erosion_k)
    state.last_bitmap = bm

    if state.mode is Mode.IM:
        # new alarms are ignored until the burst completes
        state.burst_remaining -= 1
        if state.burst_remaining == 0:
            state.mode = Mode.MD
        out = encode_lsb(frame, bm) if vga else frame.copy()
        return FrameDelivered(out, bm)

    pp = project(bm)
    if check_alarm(pp, cfg):
        state.mode = Mode.IM
        state.burst_remaining = cfg.burst_len
        return AlarmRaised(pp)
    return NoEvent()
