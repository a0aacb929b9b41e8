"""SORT-style multi-object tracker with class voting and per-class counting.

Each track carries a constant-velocity Kalman filter over the box centre
(size is modelled as static). Tracks are associated to detections with the
Hungarian algorithm on IoU distance; weak matches below ``iou_min`` are
rejected. A track is confirmed after ``n_hits`` consecutive hits and removed
after more than ``t_lost`` consecutive misses, at which point a confirmed
track is counted under the class it was predicted as most often.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .classifier import CLASSES
from .core import BoundingBox, iou
from .detector import Blob
from .opcount import OpCounter

# measured components: cx, cy, w, h
_H = np.hstack([np.eye(4), np.zeros((4, 2))])
_F = np.eye(6)
_F[0, 4] = _F[1, 5] = 1.0


@dataclass(frozen=True)
class KalmanParams:
    q_pos: float = 1.0  # px^2 per step on cx, cy, w, h
    q_vel: float = 0.01  # (px/frame)^2 per step
    r: float = 1.0  # px^2 measurement noise
    init_vel_var: float = 100.0

    def Q(self) -> np.ndarray:
        return np.diag([self.q_pos] * 4 + [self.q_vel] * 2)

    def R(self) -> np.ndarray:
        return np.eye(4) * self.r


@dataclass(frozen=True)
class TrackerConfig:
    n_hits: int = 6
    t_lost: int = 1
    iou_min: float = 0.3
    kalman: KalmanParams = field(default_factory=KalmanParams)

    def __post_init__(self):
        if self.n_hits < 1:
            raise ValueError("n_hits must be at least 1")
        if self.t_lost < 0:
            raise ValueError("t_lost must be non-negative")
        if not 0.0 < self.iou_min < 1.0:
            raise ValueError("iou_min must be in (0, 1)")


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray  # cx, cy, w, h, vcx, vcy
    cov: np.ndarray
    frame_of_last_update: int = 0


def _box_to_z(box: BoundingBox) -> np.ndarray:
    cx, cy = box.center()
    return np.array([cx, cy, box.width, box.height], dtype=np.float64)


def _mean_to_box(mean: np.ndarray) -> BoundingBox:
    return BoundingBox.from_center(mean[0], mean[1], max(mean[2], 1.0), max(mean[3], 1.0))


def kf_init(box: BoundingBox, params: KalmanParams = KalmanParams(), frame: int = 0) -> KalmanState:
    """State from a single measurement: position uncertainty is the measurement noise."""
    mean = np.concatenate([_box_to_z(box), [0.0, 0.0]])
    cov = np.diag([params.r] * 4 + [params.init_vel_var] * 2)
    return KalmanState(mean, cov, frame)


def kf_predict(ks: KalmanState, params: KalmanParams = KalmanParams()) -> tuple[KalmanState, BoundingBox]:
    mean = _F @ ks.mean
    cov = _F @ ks.cov @ _F.T + params.Q()
    cov = (cov + cov.T) / 2
    return KalmanState(mean, cov, ks.frame_of_last_update), _mean_to_box(mean)


def kf_update(ks: KalmanState, z: BoundingBox, params: KalmanParams = KalmanParams(),
              frame: Optional[int] = None) -> KalmanState:
    R = params.R()
    P = ks.cov
    S = _H @ P @ _H.T + R
    # pinv keeps zero-noise filters well defined once their covariance has collapsed
    K = P @ _H.T @ np.linalg.pinv(S)
    innov = _box_to_z(z) - _H @ ks.mean
    mean = ks.mean + K @ innov
    A = np.eye(6) - K @ _H
    cov = A @ P @ A.T + K @ R @ K.T  # Joseph form
    cov = (cov + cov.T) / 2
    mean[2] = max(mean[2], 1.0)
    mean[3] = max(mean[3], 1.0)
    return KalmanState(mean, cov, ks.frame_of_last_update if frame is None else frame)


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment on a rectangular matrix.

    Shortest augmenting paths with row/column potentials. Rows are inserted
    in index order and column scans go left to right, so ties resolve
    toward lower indices. Returns ``min(rows, cols)`` pairs sorted by row.
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if C.size == 0:
        return []
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    transposed = C.shape[0] > C.shape[1]
    if transposed:
        C = C.T
    n, m = C.shape
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row (1-based) matched to column j
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [float("inf")] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = float("inf")
            j1 = 0
            row = C[i0 - 1]
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    pairs = [(p[j] - 1, j - 1) for j in range(1, m + 1) if p[j]]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    return sorted(pairs)


def assignment_cost(cost, pairs) -> float:
    C = np.asarray(cost, dtype=np.float64)
    return float(sum(C[r, c] for r, c in pairs))


# ---------------------------------------------------------------- tracks

class Status(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    DELETED = "deleted"


@dataclass
class Track:
    id: int
    kstate: KalmanState
    last_box: BoundingBox
    status: Status = Status.TENTATIVE
    hit_streak: int = 1
    miss_count: int = 0
    class_votes: Counter = field(default_factory=Counter)
    last_vote: Optional[str] = None
    predicted_box: Optional[BoundingBox] = None

    def vote(self, cls: Optional[str]) -> None:
        if cls is not None:
            self.class_votes[cls] += 1
            self.last_vote = cls


def vote_class(track: Track) -> str:
    """Majority class over the track's lifetime; ties go to the latest vote."""
    if not track.class_votes or sum(track.class_votes.values()) == 0:
        raise ValueError(f"track {track.id} has no class votes")
    top = max(track.class_votes.values())
    leaders = [c for c, n in track.class_votes.items() if n == top]
    if len(leaders) == 1:
        return leaders[0]
    return track.last_vote


@dataclass(frozen=True)
class TrackEvent:
    frame: int
    event: str  # spawn | promote | match | miss | delete | count
    track_id: int
    cls: Optional[str] = None
    box: Optional[tuple] = None

    def to_dict(self) -> dict:
        d = {"frame": self.frame, "event": self.event, "track_id": self.track_id}
        if self.cls is not None:
            d["class"] = self.cls
        if self.box is not None:
            d["box"] = [_num(v) for v in self.box]
        return d


def _num(v):
    f = float(v)
    return int(f) if f.is_integer() else round(f, 6)


Detection = Union[Blob, BoundingBox]


def _det_box(d: Detection) -> BoundingBox:
    return d.box if isinstance(d, Blob) else d


def cost_matrix(boxes: Sequence[BoundingBox], dets: Sequence[Detection]) -> np.ndarray:
    """IoU distance between predicted track boxes and detection boxes."""
    C = np.ones((len(boxes), len(dets)))
    for i, b in enumerate(boxes):
        for j, d in enumerate(dets):
            C[i, j] = 1.0 - iou(b, _det_box(d))
    return C


def associate(boxes: Sequence[BoundingBox], dets: Sequence[Detection], iou_min: float):
    """Returns (matches, unmatched track indices, unmatched detection indices)."""
    if not boxes or not dets:
        return [], list(range(len(boxes))), list(range(len(dets)))
    C = cost_matrix(boxes, dets)
    matches = []
    for r, c in hungarian(C):
        if 1.0 - C[r, c] >= iou_min:
            matches.append((r, c))
    mt = {r for r, _ in matches}
    md = {c for _, c in matches}
    return (matches, [i for i in range(len(boxes)) if i not in mt],
            [j for j in range(len(dets)) if j not in md])


class Tracker:
    """Sequential tracker state.

    Call step() with increasing frame indices. Gaps (frames the sensor did not
    deliver) advance the motion model without counting as misses.
    """

    def __init__(self, config: Optional[TrackerConfig] = None):
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self.next_id = 1
        self.counts: Counter = Counter({c: 0 for c in CLASSES})
        self.frame = -1

    def _finalize(self, t: Track, frame: int, events: list) -> None:
        was_active = t.status is Status.ACTIVE
        t.status = Status.DELETED
        events.append(TrackEvent(frame, "delete", t.id))
        # tentative tracks never reach the counter
        if was_active:
            cls = vote_class(t)
            self.counts[cls] += 1
            events.append(TrackEvent(frame, "count", t.id, cls))

    def step(self, dets: Sequence[tuple[Detection, Optional[str]]], frame: Optional[int] = None,
             ops: Optional[OpCounter] = None) -> list[TrackEvent]:
        prev = self.frame
        self.frame = self.frame + 1 if frame is None else frame
        f = self.frame
        if f <= prev:
            raise ValueError(f"frame {f} does not follow frame {prev}")
        cfg = self.config
        kp = cfg.kalman
        events: list[TrackEvent] = []

        # frames the sensor did not deliver carry no observation: propagate the
        # motion model across them without counting them as misses
        steps = f - prev if prev >= 0 else 1
        for t in self.tracks:
            for _ in range(steps):
                t.kstate, t.predicted_box = kf_predict(t.kstate, kp)
        boxes = [t.predicted_box for t in self.tracks]
        det_objs = [d for d, _ in dets]
        matches, lost, fresh = associate(boxes, det_objs, cfg.iou_min)
        if ops is not None:
            n, m = len(boxes), len(det_objs)
            ops.add("track", arith=_KF_PREDICT_ARITH * n * steps + 10 * n * m + _KF_UPDATE_ARITH * len(matches),
                    cmp=4 * n * m + n * n * m, mem=8 * n * m)

        for r, c in matches:
            t = self.tracks[r]
            box = _det_box(det_objs[c])
            t.kstate = kf_update(t.kstate, box, kp, frame=f)
            t.last_box = box
            t.hit_streak += 1
            t.miss_count = 0
            t.vote(dets[c][1])
            events.append(TrackEvent(f, "match", t.id, dets[c][1], box.as_tuple()))
            if t.status is Status.TENTATIVE and t.hit_streak >= cfg.n_hits:
                t.status = Status.ACTIVE
                events.append(TrackEvent(f, "promote", t.id))

        for r in lost:
            t = self.tracks[r]
            t.miss_count += 1
            t.hit_streak = 0
            events.append(TrackEvent(f, "miss", t.id))
            if t.miss_count > cfg.t_lost:
                self._finalize(t, f, events)

        for c in fresh:
            box = _det_box(det_objs[c])
            t = Track(self.next_id, kf_init(box, kp, f), box)
            self.next_id += 1
            t.vote(dets[c][1])
            self.tracks.append(t)
            events.append(TrackEvent(f, "spawn", t.id, dets[c][1], box.as_tuple()))
            if t.hit_streak >= cfg.n_hits:
                t.status = Status.ACTIVE
                events.append(TrackEvent(f, "promote", t.id))

        self.tracks = [t for t in self.tracks if t.status is not Status.DELETED]
        return events

    def finish(self) -> list[TrackEvent]:
        """End of sequence: every remaining track exits the frame."""
        events: list[TrackEvent] = []
        f = self.frame + 1
        for t in self.tracks:
            self._finalize(t, f, events)
        self.tracks = []
        return events

    @property
    def active_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status is Status.ACTIVE]


# rough flop counts of the 6-state filter (matrix products dominate)
_KF_PREDICT_ARITH = 2 * 2 * 6 * 6 * 6 + 6 * 6 + 12
_KF_UPDATE_ARITH = 2 * (4 * 6 * 6 + 4 * 4 * 6) + 4 * 4 * 4 * 3 + 2 * 3 * 6 * 6 * 6


# ---------------------------------------------------------------- evaluation

def eval_error(n_true: int, n_tracked: int) -> float:
    """Relative counting error: positive when objects are missed, negative on overcount."""
    if n_true <= 0:
        raise ValueError("counting error is undefined without ground-truth objects")
    return (n_true - n_tracked) / n_true


@dataclass(frozen=True)
class ClassResult:
    n_true: int
    n_tracked: int
    error: Optional[float]  # None when n_true == 0

    @property
    def accuracy(self) -> Optional[float]:
        return None if self.error is None else 1.0 - abs(self.error)


@dataclass(frozen=True)
class EvalReport:
    per_class: dict

    @classmethod
    def from_counts(cls, truth: dict, tracked: dict) -> "EvalReport":
        out = {}
        for c in CLASSES:
            nt, np_ = int(truth.get(c, 0)), int(tracked.get(c, 0))
            out[c] = ClassResult(nt, np_, eval_error(nt, np_) if nt > 0 else None)
        return cls(out)

    def mean_accuracy(self) -> Optional[float]:
        accs = [r.accuracy for r in self.per_class.values() if r.accuracy is not None]
        return sum(accs) / len(accs) if accs else None

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "classes": {c: {"n_true": r.n_true, "n_tracked": r.n_tracked, "error": r.error}
                        for c, r in self.per_class.items()},
            "mean_accuracy": self.mean_accuracy(),
        }
