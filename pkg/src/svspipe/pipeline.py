"""End-to-end orchestration: sensor -> detector -> classifier -> tracker."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import netpbm
from .classifier import (CLASSES, FEATURES, LabeledDataset, SvmModel, ale_second_order,
                         extract_features, permutation_importance, split_dataset, svm_predict)
from .core import MotionBitmap
from .detector import DEFAULT_MIN_AREA, connected_components, detect
from .opcount import OpCountReport, OpCounter
from .sensor import (QQVGA_SHAPE, VGA_SHAPE, FrameDelivered, SensorConfig, SmartSensor, decode_lsb)
from .tracker import EvalReport, KalmanParams, TrackEvent, Tracker, TrackerConfig

CONFIG_VERSION = 1
PIPELINE_STAGES = ("projection", "detect", "features", "classify", "track")
BENCH_STAGES = ("projection", "detect", "features", "cc_label", "cc_features")


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    tau: int = 0
    min_area: int = DEFAULT_MIN_AREA

    def __post_init__(self):
        if self.min_area < 1 or self.tau < 0:
            raise ValueError("detector needs min_area >= 1 and tau >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    sensor: SensorConfig = field(default_factory=SensorConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    model_path: Optional[str] = None
    frames_dir: Optional[str] = None
    out_dir: Optional[str] = None
    seed: int = 0
    continuous: bool = False  # bypass alarm gating: every frame is processed

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {"version": CONFIG_VERSION, **d}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        version = doc.pop("version", None)
        if version != CONFIG_VERSION:
            raise PipelineError(f"unsupported config version {version!r}")
        try:
            tr = dict(doc.pop("tracker", {}))
            kalman = KalmanParams(**tr.pop("kalman", {}))
            return cls(sensor=SensorConfig(**doc.pop("sensor", {})),
                       detector=DetectorConfig(**doc.pop("detector", {})),
                       tracker=TrackerConfig(kalman=kalman, **tr), **doc)
        except TypeError as e:
            raise PipelineError(f"bad config: {e}") from None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def load_ground_truth(path) -> dict[str, int]:
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, dict) or set(doc) - set(CLASSES):
        raise PipelineError(f"{path}: ground truth must be an object with keys {CLASSES}")
    gt = {c: int(doc.get(c, 0)) for c in CLASSES}
    if any(v < 0 for v in gt.values()):
        raise PipelineError(f"{path}: counts must be non-negative")
    return gt


def load_sequence(directory) -> list[np.ndarray]:
    """Read every ``*.pgm`` in lexicographic filename order."""
    d = Path(directory)
    if not d.is_dir():
        raise PipelineError(f"{d}: not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise PipelineError(f"{d}: no .pgm frames found")
    frames = []
    shape = None
    for p in files:
        try:
            img = netpbm.read_pgm(p)
        except netpbm.NetpbmError as e:
            raise PipelineError(str(e)) from None
        if img.shape not in (VGA_SHAPE, QQVGA_SHAPE):
            raise PipelineError(f"{p}: frame is {img.shape[1]}x{img.shape[0]}, expected 640x480 or 160x120")
        if shape is not None and img.shape != shape:
            raise PipelineError(f"{p}: dimensions differ from the first frame")
        shape = img.shape
        frames.append(img)
    return frames


def write_sequence(directory, frames: Sequence[np.ndarray]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        netpbm.write_pgm(d / f"frame_{i:05d}.pgm", f)


def load_model(path) -> SvmModel:
    if path is None:
        raise PipelineError("no model file configured")
    try:
        with open(path) as f:
            return SvmModel.from_json(f.read())
    except FileNotFoundError:
        raise PipelineError(f"model file {path} not found") from None


def delivered_bitmaps(cfg: PipelineConfig, frames: Sequence[np.ndarray]):
    """Yield (frame index, bitmap) for every frame the sensor hands over."""
    if frames and frames[0].shape not in (VGA_SHAPE, QQVGA_SHAPE):
        raise PipelineError(f"unsupported frame shape {frames[0].shape}")
    sensor = SmartSensor(cfg.sensor)
    for i, frame in enumerate(frames):
        if frame.shape != frames[0].shape:
            raise PipelineError(f"frame {i}: dimensions differ from the first frame")
        ev = sensor.tick(frame)
        if cfg.continuous:
            yield i, sensor.state.last_bitmap
            continue
        if isinstance(ev, FrameDelivered):
            if frame.shape == VGA_SHAPE:
                _, bm = decode_lsb(ev.frame)
            else:
                bm = ev.bitmap
            yield i, bm


@dataclass
class PipelineResult:
    counts: dict
    events: list[TrackEvent]
    ops: OpCountReport
    report: Optional[EvalReport] = None
    frames_processed: int = 0

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict()) + "\n" for e in self.events)

    def report_dict(self) -> dict:
        doc = {"version": 1, "counts": dict(self.counts), "frames_processed": self.frames_processed}
        if self.report is not None:
            doc["evaluation"] = self.report.to_dict()
        return doc


_CLASSIFY_OPS = dict(arith=4 * 2 + 4 * 2 + 1, cmp=4 * 2 + 1, mem=4 + 4 * 3 + 1)


def run_pipeline(cfg: PipelineConfig, frames: Sequence[np.ndarray], gt: Optional[dict] = None,
                 model: Optional[SvmModel] = None) -> PipelineResult:
    if model is None:
        model = load_model(cfg.model_path)
    tracker = Tracker(cfg.tracker)
    ops = OpCountReport(PIPELINE_STAGES)
    events: list[TrackEvent] = []
    n = 0
    for idx, bm in delivered_bitmaps(cfg, frames):
        n += 1
        counter = ops.new_frame(idx)
        blobs = detect(bm, cfg.detector.min_area, cfg.detector.tau, ops=counter)
        dets = []
        for b in blobs:
            cls, _ = svm_predict(model, extract_features(b))
            counter.add("classify", **_CLASSIFY_OPS)
            dets.append((b, cls))
        events.extend(tracker.step(dets, frame=idx, ops=counter))
    events.extend(tracker.finish())
    counts = {c: int(tracker.counts[c]) for c in CLASSES}
    report = EvalReport.from_counts(gt, counts) if gt is not None else None
    return PipelineResult(counts, events, ops, report, n)


def bench(cfg: PipelineConfig, frames: Sequence[np.ndarray]) -> OpCountReport:
    """Count proposal-detector and connected-components work on the same bitmaps."""
    ops = OpCountReport(BENCH_STAGES)
    for idx, bm in delivered_bitmaps(cfg, frames):
        bench_bitmap(bm, ops.new_frame(idx), cfg.detector)
    return ops


def bench_bitmap(bm: MotionBitmap, counter: OpCounter, det: DetectorConfig = DetectorConfig()) -> None:
    detect(bm, det.min_area, det.tau, ops=counter)
    connected_components(bm, ops=counter)


def bench_summary(ops: OpCountReport) -> dict:
    t = ops.totals()
    get = lambda k: t[k].total if k in t else 0
    cc = get("cc_label")
    cc_full = cc + get("cc_features")
    return {
        "detect_over_cc_label": get("detect") / cc if cc else None,
        "proposal_path_over_cc_path": (get("detect") + get("features")) / cc_full if cc_full else None,
        "with_software_projection": (get("projection") + get("detect") + get("features")) / cc_full if cc_full else None,
    }


def emit_analysis(model: SvmModel, dataset: LabeledDataset, out_dir, seed: int = 0,
                  repeats: int = 10, bins: int = 10) -> dict[str, Path]:
    """Write permutation importance and the area/var_y ALE grid as CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    imp = permutation_importance(model, dataset, repeats=repeats, seed=seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "mean", "std"])
    for name in FEATURES:
        w.writerow([name, repr(imp[name][0]), repr(imp[name][1])])
    paths = {"importance": out / "importance.csv", "ale": out / "ale.csv", "ale_edges": out / "ale_edges.csv"}
    paths["importance"].write_text(buf.getvalue())

    grid = ale_second_order(model, dataset, "area", "var_y", bins=bins)
    f1, f2 = grid.feature1, grid.feature2
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", f"{f1}_lo", f"{f1}_hi", f"{f2}_lo", f"{f2}_hi", "count", "ale"])
    for i in range(bins):
        for j in range(bins):
            w.writerow([i, j, repr(float(grid.edges1[i])), repr(float(grid.edges1[i + 1])),
                        repr(float(grid.edges2[j])), repr(float(grid.edges2[j + 1])),
                        int(grid.counts[i, j]), repr(float(grid.values[i, j]))])
    paths["ale"].write_text(buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "index", "edge"])
    for name, edges in ((f1, grid.edges1), (f2, grid.edges2)):
        for k, e in enumerate(edges):
            w.writerow([name, k, repr(float(e))])
    paths["ale_edges"].write_text(buf.getvalue())
    return paths


def heldout_split(dataset: LabeledDataset, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    return split_dataset(dataset, 0.7, seed)


def write_text(path, text: str) -> None:
    os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(text)
