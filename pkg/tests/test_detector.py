import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svspipe.core import COLS, ROWS, BoundingBox, MotionBitmap, project
from svspipe.detector import (Blob, Interval, aggregate_comparisons, compare_detections,
                              connected_components, detect, extract_intervals, filter_empty,
                              propose_regions)
from svspipe.opcount import OpCounter

from conftest import rect_bitmap
from oracles import flood_fill_boxes, separable_bitmap


def spans(ints):
    return [(i.lo, i.hi) for i in ints]


def boxes_of(blobs):
    return sorted(b.box.as_tuple() for b in blobs)


def test_extract_intervals_examples():
    assert spans(extract_intervals([0, 0, 3, 5, 2, 0, 1, 0])) == [(2, 4), (6, 6)]
    assert extract_intervals([0] * 10) == []
    assert spans(extract_intervals([1] * 7)) == [(0, 6)]
    assert spans(extract_intervals([2, 1, 3, 0, 1], tau=1)) == [(0, 0), (2, 2)]


def test_propose_regions_examples():
    xs = [Interval(2, 4), Interval(6, 6)]
    ys = [Interval(1, 3)]
    assert [b.as_tuple() for b in propose_regions(xs, ys)] == [(2, 1, 4, 3), (6, 1, 6, 3)]
    assert propose_regions([], ys) == [] and propose_regions(xs, []) == []
    assert len(propose_regions(xs, [Interval(0, 0), Interval(2, 2), Interval(5, 9)])) == 6


def test_filter_empty_examples():
    bm = rect_bitmap((10, 10, 19, 19), (30, 30, 39, 39))
    pp = project(bm)
    boxes = propose_regions(extract_intervals(pp.xproj), extract_intervals(pp.yproj))
    assert len(boxes) == 4
    kept = filter_empty(bm, boxes)
    assert boxes_of(kept) == [(10, 10, 19, 19), (30, 30, 39, 39)]
    one = rect_bitmap((5, 5, 5, 5))
    assert len(filter_empty(one, [BoundingBox(0, 0, 9, 9)], min_area=1)) == 1
    assert filter_empty(one, [BoundingBox(0, 0, 9, 9)], min_area=4) == []
    assert filter_empty(MotionBitmap.zeros(), [BoundingBox(0, 0, 9, 9)], min_area=1) == []
    with pytest.raises(ValueError):
        filter_empty(one, [], min_area=0)


def test_detect_single_rectangle():
    blobs = detect(rect_bitmap((40, 20, 52, 31)))
    assert boxes_of(blobs) == [(40, 20, 52, 31)]
    assert blobs[0].moments.m00 == 13 * 12


def test_detect_diagonal_overlap_enlarges_boxes():
    bm = rect_bitmap((10, 10, 19, 19), (30, 15, 39, 29))
    det = detect(bm)
    cc = connected_components(bm)
    assert len(det) == 2 and len(cc) == 2
    assert boxes_of(det) == [(10, 10, 19, 29), (30, 10, 39, 29)]
    assert boxes_of(cc) == [(10, 10, 19, 19), (30, 15, 39, 29)]


def test_connected_components_examples():
    assert boxes_of(connected_components(rect_bitmap((3, 3, 8, 5)))) == [(3, 3, 8, 5)]
    bits = np.zeros((ROWS, COLS), np.uint8)
    bits[10, 10] = bits[11, 11] = 1
    assert len(connected_components(MotionBitmap(bits))) == 1
    assert connected_components(MotionBitmap.zeros()) == []


def test_cc_matches_flood_fill_exhaustive_4x4():
    for code in range(1 << 16):
        bits = ((code >> np.arange(16)) & 1).reshape(4, 4).astype(np.uint8)
        got = boxes_of(connected_components(MotionBitmap.with_dims(bits)))
        assert got == flood_fill_boxes(bits), code


def test_cc_matches_flood_fill_sampled_5x5():
    rng = np.random.default_rng(5)
    codes = rng.integers(0, 1 << 25, 100_000)
    bitsets = ((codes[:, None] >> np.arange(25)) & 1).astype(np.uint8).reshape(-1, 5, 5)
    for bits in bitsets:
        got = boxes_of(connected_components(MotionBitmap.with_dims(bits)))
        assert got == flood_fill_boxes(bits)


def test_cc_matches_flood_fill_full_size():
    rng = np.random.default_rng(11)
    for _ in range(10):
        bits = (rng.random((ROWS, COLS)) < rng.uniform(0.02, 0.5)).astype(np.uint8)
        assert boxes_of(connected_components(MotionBitmap(bits))) == flood_fill_boxes(bits)


def test_cc_moments_are_box_moments():
    bm = rect_bitmap((2, 2, 4, 4), (6, 6, 8, 8))
    bits = bm.bits.copy()
    bits[5, 5] = 1
    for b in connected_components(MotionBitmap(bits)):
        assert b.source == "oracle" and b.moments.m00 == 19


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_separable_scenes_are_exact(seed):
    bits, truth = separable_bitmap(np.random.default_rng(seed))
    bm = MotionBitmap(bits)
    det = detect(bm, min_area=1)
    assert boxes_of(det) == truth == boxes_of(connected_components(bm))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.3))
def test_coverage_and_whole_runs(seed, density):
    bits = np.random.default_rng(seed).random((ROWS, COLS)) < density
    bm = MotionBitmap(bits)
    pp = project(bm)
    xs, ys = extract_intervals(pp.xproj), extract_intervals(pp.yproj)
    boxes = propose_regions(xs, ys)
    covered = np.zeros_like(bits)
    for b in boxes:
        covered[b.y0 : b.y1 + 1, b.x0 : b.x1 + 1] = True
        # no box edge inside a positive run: the cell just outside each edge is inactive
        for lo, hi, proj in ((b.x0, b.x1, pp.xproj), (b.y0, b.y1, pp.yproj)):
            assert lo == 0 or proj[lo - 1] == 0
            assert hi == len(proj) - 1 or proj[hi + 1] == 0
    assert not (bits & ~covered).any()


def test_detect_is_pure():
    bits = np.random.default_rng(2).random((ROWS, COLS)) < 0.05
    bm = MotionBitmap(bits)
    assert repr(detect(bm)) == repr(detect(bm))


def test_detect_counts_stages():
    ops = OpCounter()
    detect(rect_bitmap((10, 10, 19, 19)), ops=ops)
    assert ops.get("projection").total > 0 and ops.get("detect").total > 0
    assert ops.get("features").total > 0


def test_compare_examples():
    bm = rect_bitmap((10, 10, 19, 19), (30, 30, 39, 39))
    cc = connected_components(bm)
    c = compare_detections(cc, cc)
    assert (c.mean_iou, c.mean_area_ratio, c.extra_per_frame) == (1.0, 1.0, 0.0)
    one = [Blob(BoundingBox(0, 0, 3, 3), cc[0].moments)]
    c = compare_detections(one, [])
    assert c.extra_per_frame == 1 and c.mean_iou is None and c.mean_area_ratio is None


def test_compare_greedy_prefers_best_pair():
    m = connected_components(rect_bitmap((0, 0, 9, 9)))[0].moments
    oracle = [Blob(BoundingBox(0, 0, 9, 9), m)]
    props = [Blob(BoundingBox(0, 0, 19, 9), m), Blob(BoundingBox(0, 0, 9, 9), m)]
    c = compare_detections(props, oracle)
    assert c.matches[0][:2] == (1, 0) and c.extra_per_frame == 1


def test_aggregate_pools_matches():
    m = connected_components(rect_bitmap((0, 0, 9, 9)))[0].moments
    a = compare_detections([Blob(BoundingBox(0, 0, 9, 9), m)], [Blob(BoundingBox(0, 0, 9, 9), m)])
    b = compare_detections([Blob(BoundingBox(0, 0, 19, 9), m), Blob(BoundingBox(50, 0, 52, 2), m)],
                           [Blob(BoundingBox(0, 0, 9, 9), m)])
    agg = aggregate_comparisons([a, b])
    assert agg.mean_iou == pytest.approx((1.0 + 0.5) / 2)
    assert agg.mean_area_ratio == pytest.approx((1.0 + 2.0) / 2)
    assert agg.extra_per_frame == 0.5
