"""Projection-based two-stage detector and its connected-components baseline.

Region proposal works only on the two projection vectors: positive runs on
each axis become intervals and the Cartesian product of x- and y-intervals
gives candidate boxes. Candidates covering too few hot-pixels are dropped
using their moments. ``connected_components`` is the exact (and far more
expensive) labelling used as oracle and cost baseline.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import BoundingBox, Moments, MotionBitmap, ProjectionPair, iou, moments, project
from .opcount import OpCounter

DEFAULT_MIN_AREA = 4

# per hot-pixel cost of accumulating count, sum x, sum y, sum x^2, sum y^2
_MOMENT_ARITH_PER_PIXEL = 7
_MOMENT_ARITH_FINAL = 8


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"interval lo {self.lo} > hi {self.hi}")


@dataclass(frozen=True)
class Blob:
    box: BoundingBox
    moments: Moments
    source: str = "proposal"  # or "oracle"


@dataclass(frozen=True)
class DetectionComparison:
    mean_iou: Optional[float]
    mean_area_ratio: Optional[float]
    extra_per_frame: float
    matches: tuple = ()  # (proposal index, oracle index, iou, area ratio)


def extract_intervals(proj, tau: int = 0, ops: Optional[OpCounter] = None) -> list[Interval]:
    """Maximal runs of entries above ``tau``, ascending."""
    out = []
    start = None
    n = len(proj)
    for i, v in enumerate(proj):
        if v > tau:
            if start is None:
                start = i
        elif start is not None:
            out.append(Interval(start, i - 1))
            start = None
    if start is not None:
        out.append(Interval(start, n - 1))
    if ops is not None:
        ops.add("detect", cmp=n, mem=n + 2 * len(out))
    return out


def propose_regions(
    x_ints: Sequence[Interval], y_ints: Sequence[Interval], ops: Optional[OpCounter] = None
) -> list[BoundingBox]:
    boxes = [BoundingBox(xi.lo, yj.lo, xi.hi, yj.hi) for yj in y_ints for xi in x_ints]
    if ops is not None:
        ops.add("detect", mem=8 * len(boxes))
    return boxes


def _count_moments(ops: Optional[OpCounter], stage: str, box_area: int, m00: int) -> None:
    if ops is not None:
        ops.add(stage, cmp=box_area, mem=box_area, arith=_MOMENT_ARITH_PER_PIXEL * m00 + _MOMENT_ARITH_FINAL)


def filter_empty(
    bm: MotionBitmap, boxes: Sequence[BoundingBox], min_area: int = DEFAULT_MIN_AREA,
    ops: Optional[OpCounter] = None,
) -> list[Blob]:
    if min_area < 1:
        raise ValueError("min_area must be at least 1")
    kept = []
    for box in boxes:
        m = moments(bm, box)
        _count_moments(ops, "features", int(box.area()), m.m00)
        if ops is not None:
            ops.add("features", cmp=1)
        if m.m00 >= min_area:
            kept.append(Blob(box, m, "proposal"))
    return kept


def detect(
    bm: MotionBitmap,
    min_area: int = DEFAULT_MIN_AREA,
    tau: int = 0,
    ops: Optional[OpCounter] = None,
    projections: Optional[ProjectionPair] = None,
) -> list[Blob]:
    """Run the full proposal detector on one bitmap.

    ``projections`` may be supplied when the sensor already delivered them;
    otherwise they are computed here and charged to the ``projection`` stage.
    """
    if projections is None:
        projections = project(bm)
        if ops is not None:
            n = bm.rows * bm.cols
            ops.add("projection", mem=n + bm.rows + bm.cols, arith=2 * bm.popcount())
    xs = extract_intervals(projections.xproj, tau, ops)
    ys = extract_intervals(projections.yproj, tau, ops)
    return filter_empty(bm, propose_regions(xs, ys, ops), min_area, ops)


def _find(parent: list[int], i: int) -> tuple[int, int]:
    hops = 0
    root = i
    while parent[root] != root:
        root = parent[root]
        hops += 1
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root, hops


def connected_components(bm: MotionBitmap, ops: Optional[OpCounter] = None) -> list[Blob]:
    """8-connected components via two-pass union-find labelling.

    Components are returned in raster order of their first pixel.
    """
    bits = bm.bits
    h, w = bits.shape
    labels = np.full((h, w), -1, dtype=np.int64)
    parent: list[int] = []
    ys, xs = np.nonzero(bits)
    mem = h * w  # first-pass raster read of every pixel
    cmp = h * w
    hops = 0
    for y, x in zip(ys.tolist(), xs.tolist()):
        # already-visited neighbours in raster order: W, NW, N, NE
        neigh = []
        if x > 0 and labels[y, x - 1] >= 0:
            neigh.append(labels[y, x - 1])
        if y > 0:
            for dx in (-1, 0, 1):
                nx = x + dx
                if 0 <= nx < w and labels[y - 1, nx] >= 0:
                    neigh.append(labels[y - 1, nx])
        mem += 5
        cmp += 4
        if not neigh:
            lab = len(parent)
            parent.append(lab)
        else:
            lab, hh = _find(parent, int(neigh[0]))
            hops += hh
            for other in neigh[1:]:
                r, hh = _find(parent, int(other))
                hops += hh
                cmp += 1
                if r != lab:
                    lo, hi = min(r, lab), max(r, lab)
                    parent[hi] = lo
                    lab = lo
        labels[y, x] = lab

    roots: dict[int, int] = {}
    order: list[int] = []
    comp_pixels: dict[int, list[tuple[int, int]]] = {}
    for y, x in zip(ys.tolist(), xs.tolist()):
        r, hh = _find(parent, int(labels[y, x]))
        hops += hh
        if r not in roots:
            roots[r] = len(order)
            order.append(r)
            comp_pixels[r] = []
        comp_pixels[r].append((y, x))
    mem += h * w + 2 * hops  # second pass re-reads the label image
    cmp += hops + 4 * len(ys)  # bounding-box min/max updates
    if ops is not None:
        ops.add("cc_label", cmp=cmp, mem=mem, arith=len(ys))

    blobs = []
    for r in order:
        pts = np.asarray(comp_pixels[r])
        y0, x0 = pts.min(axis=0)
        y1, x1 = pts.max(axis=0)
        box = BoundingBox(int(x0), int(y0), int(x1), int(y1))
        m = moments(bm, box)
        _count_moments(ops, "cc_features", int(box.area()), m.m00)
        blobs.append(Blob(box, m, "oracle"))
    return blobs


def compare_detections(proposals: Sequence[Blob], oracle: Sequence[Blob]) -> DetectionComparison:
    """Greedy one-to-one matching by descending IoU (ties: lower proposal index)."""
    pairs = []
    for i, p in enumerate(proposals):
        for j, o in enumerate(oracle):
            v = iou(p.box, o.box)
            if v > 0:
                pairs.append((-v, i, j))
    pairs.sort()
    used_p, used_o = set(), set()
    matches = []
    for neg, i, j in pairs:
        if i in used_p or j in used_o:
            continue
        used_p.add(i)
        used_o.add(j)
        matches.append((i, j, -neg, proposals[i].box.area() / oracle[j].box.area()))
    return _summarise(matches, float(len(proposals) - len(matches)))


def _summarise(matches: list, extra: float) -> DetectionComparison:
    if not matches:
        return DetectionComparison(None, None, extra, ())
    mean_iou = sum(m[2] for m in matches) / len(matches)
    ratio = sum(m[3] for m in matches) / len(matches)
    return DetectionComparison(mean_iou, ratio, extra, tuple(matches))


def aggregate_comparisons(comps: Sequence[DetectionComparison]) -> DetectionComparison:
    """Pool matched pairs over frames; unmatched proposals are averaged per frame."""
    pooled = [m for c in comps for m in c.matches]
    extra = sum(c.extra_per_frame for c in comps) / len(comps) if comps else 0.0
    out = _summarise(pooled, extra)
    return DetectionComparison(out.mean_iou, out.mean_area_ratio, out.extra_per_frame)
