"""Scripted synthetic street scenes for end-to-end runs.

Actors are textured rectangles sliding at constant velocity over a static
background. Pedestrian textures are patchy so that their motion silhouettes
resemble the training blobs; car bodies are nearly solid. Sizes follow the
same ground-plane perspective as the training-set generator.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .classifier import CAR, PEDESTRIAN, SynthParams
from .core import COLS, ROWS


@dataclass(frozen=True)
class Actor:
    cls: str
    start: int  # first frame the actor exists
    x: float  # left column at ``start``
    bottom: int  # bottom row (fixed: actors move along the ground plane)
    vx: float
    width: int
    height: int
    fill: float  # fraction of textured pixels that differ from the background
    contrast: float = 40.0
    vy: float = 0.0

    def left_at(self, t: int) -> float:
        return self.x + self.vx * (t - self.start)

    def bottom_at(self, t: int) -> float:
        return self.bottom + self.vy * (t - self.start)


def actor(cls: str, start: int, x: float, bottom: int, vx: float, size_scale: float = 1.0,
          params: SynthParams = SynthParams(), **kw) -> Actor:
    """Actor with mid-range size and fill for its class at the given ground row."""
    s = params.scale(bottom) * size_scale
    if cls == PEDESTRIAN:
        w, h, drop = np.mean(params.ped_width), np.mean(params.ped_height), np.mean(params.ped_dropout)
    else:
        w, h, drop = np.mean(params.car_width), np.mean(params.car_height), np.mean(params.car_dropout)
    return Actor(cls, start, x, bottom, vx, int(round(s * w)), int(round(s * h)), 1.0 - drop, **kw)


@dataclass(frozen=True)
class Scene:
    name: str
    n_frames: int
    actors: tuple[Actor, ...]
    background: float = 110.0
    texture_sigma: float = 6.0  # static background texture
    noise_sigma: float = 1.5  # per-frame sensor noise
    seed: int = 0
    counted: dict = field(default_factory=dict)  # ground truth override

    def ground_truth(self) -> dict[str, int]:
        if self.counted:
            return dict(self.counted)
        c = Counter(a.cls for a in self.actors)
        return {CAR: c.get(CAR, 0), PEDESTRIAN: c.get(PEDESTRIAN, 0)}

    def render(self) -> list[np.ndarray]:
        """QQVGA (120x160) uint8 frames."""
        rng = np.random.default_rng(self.seed)
        base = self.background + rng.normal(0.0, self.texture_sigma, (ROWS, COLS))
        masks = []
        for a in self.actors:
            sign = 1.0 if a.cls == CAR else -1.0
            on = rng.random((a.height, a.width)) < a.fill
            # solid outline, as in the training blobs: no empty row or column inside the silhouette
            on[0, :] = on[-1, :] = on[:, 0] = on[:, -1] = True
            masks.append(on * sign * a.contrast)
        frames = []
        for t in range(self.n_frames):
            img = base.copy()
            for a, m in zip(self.actors, masks):
                if t < a.start:
                    continue
                x0 = int(round(a.left_at(t)))
                y0 = int(round(a.bottom_at(t))) - a.height + 1
                _paste(img, m, y0, x0)
            img += rng.normal(0.0, self.noise_sigma, img.shape)
            frames.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
        return frames

    def render_vga(self) -> list[np.ndarray]:
        """VGA frames whose 4x4 block means reproduce the QQVGA render exactly."""
        return [upsample_vga(f) for f in self.render()]


def upsample_vga(frame: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(frame, 4, axis=0), 4, axis=1)


def _paste(img: np.ndarray, delta: np.ndarray, y0: int, x0: int) -> None:
    h, w = delta.shape
    ys, xs = max(y0, 0), max(x0, 0)
    ye, xe = min(y0 + h, img.shape[0]), min(x0 + w, img.shape[1])
    if ys >= ye or xs >= xe:
        return
    img[ys:ye, xs:xe] += delta[ys - y0 : ye - y0, xs - x0 : xe - x0]


def static_scene(n_frames: int = 30, seed: int = 0) -> Scene:
    return Scene("static", n_frames, (), seed=seed)


def single_car(seed: int = 0) -> Scene:
    return Scene("single_car", 70, (actor(CAR, 2, -16, 108, 3.0),), seed=seed)


def car_and_pedestrians(seed: int = 0) -> Scene:
    return Scene("car_and_pedestrians", 150, (
        actor(CAR, 2, 161, 112, -3.0),
        actor(PEDESTRIAN, 30, -10, 70, 1.5),
        actor(PEDESTRIAN, 40, 161, 96, -1.5),
    ), seed=seed)


def six_pedestrians(seed: int = 0) -> Scene:
    # at most two walkers at a time on well separated rows, except the last pair,
    # whose silhouettes share rows and briefly merge as they pass (the near miss)
    return Scene("six_pedestrians", 260, (
        actor(PEDESTRIAN, 2, -10, 64, 2.5),
        actor(PEDESTRIAN, 10, 161, 116, -2.5),
        actor(PEDESTRIAN, 80, -10, 112, 2.5),
        actor(PEDESTRIAN, 90, 161, 66, -2.5),
        actor(PEDESTRIAN, 165, -10, 90, 2.5),
        actor(PEDESTRIAN, 165, 161, 96, -2.5),
    ), seed=seed)


SUITE = {
    "single_car": single_car,
    "car_and_pedestrians": car_and_pedestrians,
    "six_pedestrians": six_pedestrians,
}


def get_scene(name: str, seed: int = 0) -> Scene:
    if name == "static":
        return static_scene(seed=seed)
    try:
        return SUITE[name](seed)
    except KeyError:
        raise ValueError(f"unknown scene {name!r}; choose from static, {', '.join(SUITE)}") from None
