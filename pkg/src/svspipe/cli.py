"""Command-line entry point: ``svspipe <subcommand> [options]``.

Exit status is 0 on success and 2 on any validation error (bad config,
malformed frames, missing model, unknown scene).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import netpbm
from .classifier import LabeledDataset, SvmModel, split_dataset, svm_train, synth_dataset
from .core import BoundingBox
from .detector import compare_detections, connected_components, detect
from .pipeline import (PipelineConfig, PipelineError, bench, bench_summary, delivered_bitmaps,
                       emit_analysis, load_ground_truth, load_model, load_sequence, run_pipeline,
                       write_sequence, write_text)
from .scenes import SUITE, get_scene
from .sensor import AlarmRaised, FrameDelivered, SmartSensor

EXIT_OK = 0
EXIT_INVALID = 2


def _box_dict(box: BoundingBox) -> list:
    return [int(box.x0), int(box.y0), int(box.x1), int(box.y1)]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out_dir"] = args.out
    for name in ("frames", "model"):
        v = getattr(args, name, None)
        if v is not None:
            over["frames_dir" if name == "frames" else "model_path"] = v
    if getattr(args, "continuous", False):
        over["continuous"] = True
    return dataclasses.replace(cfg, **over)


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _frames(cfg: PipelineConfig, args):
    """Frames and optional ground truth from --scene or --frames."""
    scene = getattr(args, "scene", None)
    if scene:
        sc = get_scene(scene, cfg.seed)
        return (sc.render_vga() if getattr(args, "vga", False) else sc.render()), sc.ground_truth()
    if cfg.frames_dir is None:
        raise PipelineError("no input: pass --frames <dir> or --scene <name>")
    gt = None
    gt_path = getattr(args, "gt", None)
    if gt_path is None and (Path(cfg.frames_dir) / "gt.json").is_file():
        gt_path = Path(cfg.frames_dir) / "gt.json"
    if gt_path is not None:
        gt = load_ground_truth(gt_path)
    return load_sequence(cfg.frames_dir), gt


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    sc = get_scene(args.scene, cfg.seed)
    frames = sc.render_vga() if args.vga else sc.render()
    write_sequence(out / "frames", frames)
    write_text(out / "frames" / "gt.json", _dump(sc.ground_truth()))
    sensor = SmartSensor(cfg.sensor)
    (out / "burst").mkdir(exist_ok=True)
    log = []
    for i, f in enumerate(frames):
        ev = sensor.tick(f)
        if isinstance(ev, AlarmRaised):
            log.append({"frame": i, "event": "alarm"})
        elif isinstance(ev, FrameDelivered):
            netpbm.write_pgm(out / "burst" / f"frame_{i:05d}.pgm", ev.frame)
            netpbm.write_pbm(out / "burst" / f"frame_{i:05d}.pbm", ev.bitmap)
            log.append({"frame": i, "event": "deliver", "hot_pixels": ev.bitmap.popcount()})
    write_text(out / "sensor.jsonl", "".join(json.dumps(r) + "\n" for r in log))
    print(f"{sc.name}: {len(frames)} frames, {sum(r['event'] == 'deliver' for r in log)} delivered -> {out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    if args.bitmap:
        items = [(0, netpbm.read_pbm(args.bitmap))]
    else:
        frames, _ = _frames(cfg, args)
        items = list(delivered_bitmaps(cfg, frames))
    rows = []
    for idx, bm in items:
        blobs = detect(bm, cfg.detector.min_area, cfg.detector.tau)
        rec = {"frame": idx, "boxes": [_box_dict(b.box) for b in blobs],
               "area": [b.moments.m00 for b in blobs]}
        if args.oracle:
            comp = compare_detections(blobs, connected_components(bm))
            rec.update(oracle_mean_iou=comp.mean_iou, oracle_area_ratio=comp.mean_area_ratio,
                       extra=comp.extra_per_frame)
        rows.append(rec)
    write_text(out / "detections.jsonl", "".join(json.dumps(r) + "\n" for r in rows))
    print(f"{len(rows)} frames, {sum(len(r['boxes']) for r in rows)} detections -> {out / 'detections.jsonl'}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    model = load_model(cfg.model_path)
    frames, gt = _frames(cfg, args)
    res = run_pipeline(cfg, frames, gt, model=model)
    out = _out(cfg)
    write_text(out / "events.jsonl", res.events_jsonl())
    write_text(out / "report.json", _dump(res.report_dict()))
    write_text(out / "ops.json", _dump(res.ops.to_dict()))
    print(json.dumps(res.report_dict(), sort_keys=True))
    return EXIT_OK


def _dataset(args, seed: int) -> LabeledDataset:
    if args.dataset:
        return LabeledDataset.from_csv(Path(args.dataset).read_text())
    return synth_dataset(args.n_per_class, seed)


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    ds = _dataset(args, cfg.seed)
    train, test = split_dataset(ds, 0.7, cfg.seed)
    model = svm_train(train, seed=cfg.seed)
    write_text(out / "model.json", model.to_json())
    write_text(out / "dataset.csv", ds.to_csv())
    summary = {"rows": len(ds), "train_rows": len(train), "heldout_rows": len(test),
               "train_accuracy": model.accuracy(train), "heldout_accuracy": model.accuracy(test)}
    write_text(out / "train.json", _dump(summary))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_explain(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    model = load_model(cfg.model_path)
    ds = _dataset(args, cfg.seed)
    _, heldout = split_dataset(ds, 0.7, cfg.seed)
    paths = emit_analysis(model, heldout, out, seed=cfg.seed, repeats=args.repeats)
    print(" ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    frames, _ = _frames(cfg, args)
    ops = bench(cfg, frames)
    doc = {"version": 1, "summary": bench_summary(ops), **ops.to_dict()}
    write_text(_out(cfg) / "bench.json", _dump(doc))
    print(json.dumps(doc["summary"], sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory (default: current directory)")

    def inputs(p, gt=True):
        p.add_argument("--frames", help="directory of P5 frames")
        p.add_argument("--scene", choices=["static", *SUITE], help="render a scripted scene instead")
        p.add_argument("--vga", action="store_true", help="render the scene at 640x480")
        p.add_argument("--continuous", action="store_true", help="process every frame, ignoring alarms")
        if gt:
            p.add_argument("--gt", help="ground-truth JSON (default: <frames>/gt.json if present)")

    ap = argparse.ArgumentParser(prog="svspipe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="render a scene and run the sensor over it")
    p.add_argument("--scene", default="car_and_pedestrians", choices=["static", *SUITE])
    p.add_argument("--vga", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", parents=[common], help="run the proposal detector")
    inputs(p, gt=False)
    p.add_argument("--bitmap", help="single P4 motion bitmap")
    p.add_argument("--oracle", action="store_true", help="also compare with connected components")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("run", parents=[common], help="full pipeline with counting and evaluation")
    inputs(p)
    p.add_argument("--model", help="model JSON from 'train'")
    p.set_defaults(func=cmd_run)

    for name, fn, hlp in (("train", cmd_train, "train the SVM on a synthetic or given dataset"),
                          ("explain", cmd_explain, "permutation importance and second-order ALE")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--dataset", help="labelled feature CSV (default: regenerate)")
        p.add_argument("--n-per-class", type=int, default=132)
        if name == "explain":
            p.add_argument("--model", help="model JSON from 'train'")
            p.add_argument("--repeats", type=int, default=10)
        p.set_defaults(func=fn)

    p = sub.add_parser("bench", parents=[common], help="operation counts: proposals vs connected components")
    inputs(p, gt=False)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as e:
        # PipelineError and NetpbmError are ValueErrors
        print(f"svspipe {args.command}: error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
