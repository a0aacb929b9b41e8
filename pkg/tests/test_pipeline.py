import json

import numpy as np
import pytest

from svspipe import netpbm
from svspipe.core import COLS, ROWS, MotionBitmap
from svspipe.pipeline import (BENCH_STAGES, DetectorConfig, PipelineConfig, PipelineError, bench, bench_bitmap,
                              bench_summary, emit_analysis, load_ground_truth, load_model, load_sequence,
                              run_pipeline, write_sequence)
from svspipe.opcount import OpCountReport
from svspipe.scenes import get_scene
from svspipe.sensor import SensorConfig


def test_config_round_trip(tmp_path):
    cfg = PipelineConfig(sensor=SensorConfig(theta=20), detector=DetectorConfig(min_area=6), seed=3)
    p = tmp_path / "cfg.json"
    p.write_text(cfg.to_json())
    assert PipelineConfig.load(p) == cfg
    with pytest.raises(PipelineError):
        PipelineConfig.from_dict({"version": 7})
    with pytest.raises(PipelineError):
        PipelineConfig.from_dict({"version": 1, "sensor": {"nope": 1}})
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"version": 1, "sensor": {"alpha": 5}})


def test_load_sequence(tmp_path):
    frames = [np.full((ROWS, COLS), i, np.uint8) for i in range(3)]
    write_sequence(tmp_path, frames[::-1])
    got = load_sequence(tmp_path)
    assert len(got) == 3 and [int(f[0, 0]) for f in got] == [2, 1, 0]


def test_load_sequence_errors(tmp_path):
    with pytest.raises(PipelineError, match="no .pgm"):
        load_sequence(tmp_path)
    (tmp_path / "a.pgm").write_bytes(b"P2\n160 120\n255\n" + b"0 " * (ROWS * COLS))
    with pytest.raises(PipelineError, match="a.pgm"):
        load_sequence(tmp_path)
    (tmp_path / "a.pgm").write_bytes(b"P5\n160 120\n255\n" + bytes(100))
    with pytest.raises(PipelineError, match="a.pgm"):
        load_sequence(tmp_path)
    netpbm.write_pgm(tmp_path / "a.pgm", np.zeros((ROWS, COLS), np.uint8))
    netpbm.write_pgm(tmp_path / "b.pgm", np.zeros((ROWS * 4, COLS * 4), np.uint8))
    with pytest.raises(PipelineError, match="b.pgm"):
        load_sequence(tmp_path)
    netpbm.write_pgm(tmp_path / "b.pgm", np.zeros((10, 10), np.uint8))
    with pytest.raises(PipelineError, match="b.pgm"):
        load_sequence(tmp_path)


def test_ground_truth_and_model_loading(tmp_path):
    p = tmp_path / "gt.json"
    p.write_text('{"car": 1, "pedestrian": 2}')
    assert load_ground_truth(p) == {"car": 1, "pedestrian": 2}
    p.write_text('{"car": -1}')
    with pytest.raises(PipelineError):
        load_ground_truth(p)
    p.write_text('{"bus": 1}')
    with pytest.raises(PipelineError):
        load_ground_truth(p)
    with pytest.raises(PipelineError):
        load_model(None)
    with pytest.raises(PipelineError):
        load_model(tmp_path / "missing.json")


def test_static_sequence(model):
    res = run_pipeline(PipelineConfig(), get_scene("static").render(), {"car": 0, "pedestrian": 0}, model=model)
    assert res.counts == {"car": 0, "pedestrian": 0} and res.events == [] and res.frames_processed == 0


def test_missing_model_is_error():
    with pytest.raises(PipelineError):
        run_pipeline(PipelineConfig(), get_scene("static").render())


def test_qqvga_and_vga_paths_agree(model):
    sc = get_scene("single_car")
    a = run_pipeline(PipelineConfig(), sc.render(), sc.ground_truth(), model=model)
    b = run_pipeline(PipelineConfig(), sc.render_vga(), sc.ground_truth(), model=model)
    assert a.events_jsonl() == b.events_jsonl()
    assert a.report_dict() == b.report_dict()


def test_continuous_mode_processes_every_frame(model):
    sc = get_scene("single_car")
    frames = sc.render()
    res = run_pipeline(PipelineConfig(continuous=True), frames, model=model)
    assert res.frames_processed == len(frames)
    assert res.counts["car"] == 1


def test_op_report_is_additive(model):
    sc = get_scene("car_and_pedestrians")
    res = run_pipeline(PipelineConfig(), sc.render(), model=model)
    d = res.ops.to_dict()
    per_frame = d["frames"]
    for stage, tot in d["totals"].items():
        for kind in ("cmp", "arith", "mem"):
            assert tot[kind] == sum(f["stages"].get(stage, {}).get(kind, 0) for f in per_frame)
    assert res.ops.grand_total() == sum(v.total for v in res.ops.totals().values())
    assert sum(res.ops.shares().values()) == pytest.approx(1.0)


def test_bench_empty_and_dense():
    empty = OpCountReport(BENCH_STAGES)
    bench_bitmap(MotionBitmap.zeros(), empty.new_frame(0))
    t = empty.totals()
    assert t["detect"].total <= 2 * (ROWS + COLS)
    assert t["cc_label"].total >= 2 * ROWS * COLS
    dense = OpCountReport(BENCH_STAGES)
    bench_bitmap(MotionBitmap(np.random.default_rng(0).random((ROWS, COLS)) < 0.5), dense.new_frame(0))
    t = dense.totals()
    assert t["cc_label"].total >= t["detect"].total
    assert t["cc_label"].total + t["cc_features"].total >= t["detect"].total + t["features"].total


def test_bench_summary_on_scene():
    sc = get_scene("single_car")
    ops = bench(PipelineConfig(), sc.render())
    s = bench_summary(ops)
    assert 0 < s["detect_over_cc_label"] < s["proposal_path_over_cc_path"] < s["with_software_projection"] < 1


def test_emit_analysis(tmp_path, model, split):
    paths = emit_analysis(model, split[1], tmp_path / "a", seed=0)
    rows = paths["importance"].read_text().splitlines()
    assert rows[0] == "feature,mean,std" and len(rows) == 5
    ale = paths["ale"].read_text().splitlines()
    assert len(ale) == 101
    edges = paths["ale_edges"].read_text().splitlines()
    assert len(edges) == 1 + 2 * 11
    again = emit_analysis(model, split[1], tmp_path / "b", seed=0)
    for k in paths:
        assert paths[k].read_bytes() == again[k].read_bytes()
