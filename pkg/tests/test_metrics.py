import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowtrack.geometry import BBox
from flowtrack.metrics import (
    EvaluationError, Trajectory, evaluate, evaluate_clear, evaluate_idf1, evaluate_track_ap,
    format_kv, format_table, interpolated_ap, tracklet_iou,
)
from golden import idf1_example, mota_example, random_cases, suite, to_traj, trk
from oracles import brute_clear, brute_idf1, brute_track_ap


def test_mota_worked_example():
    gt, pred = mota_example()
    r = evaluate_clear(to_traj(gt), to_traj(pred))
    assert (r.fn, r.fp, r.ids) == (2, 1, 1)
    assert r.mota == pytest.approx(0.6)


def test_idf1_worked_example():
    gt, pred = idf1_example()
    assert evaluate_idf1(to_traj(gt), to_traj(pred)) == pytest.approx(0.5)


def test_perfect_tracking():
    gt = to_traj([trk(1, range(1, 6), [0] * 5), trk(2, range(1, 6), [40] * 5)])
    rep = evaluate(gt, gt)
    c = rep.clear
    assert (c.mota, c.motp, c.ids, c.fm, c.fp, c.fn) == (1.0, 1.0, 0, 0, 0, 0)
    assert rep.idf1 == 1.0
    assert all(v == pytest.approx(1.0) for v in rep.ap.per_threshold.values())


def test_empty_predictions():
    gt = to_traj([trk(1, range(1, 6), [0] * 5), trk(2, range(1, 6), [50] * 5)])
    r = evaluate_clear(gt, [])
    assert r.mota == 0.0 and r.fn == 10
    assert evaluate_idf1(gt, []) == 0.0
    assert evaluate_track_ap(gt, []).mean == 0.0


def test_empty_ground_truth():
    with pytest.raises(EvaluationError):
        evaluate_clear([], [])
    assert evaluate_idf1([], []) == 1.0
    assert evaluate_idf1([], to_traj([trk(1, [1], [0])])) == 0.0


def test_half_coverage_tracklet_ap():
    gt = to_traj([trk(1, range(1, 11), [0] * 10)])
    pred = to_traj([trk(1, range(1, 6), [0] * 5)])
    assert tracklet_iou(pred[0], gt[0]) == pytest.approx(0.5)
    ap = evaluate_track_ap(gt, pred).per_threshold
    assert ap[0.25] == pytest.approx(1.0)
    assert ap[0.5] == 0.0 and ap[0.75] == 0.0


def test_interpolated_ap_values():
    assert interpolated_ap([True, False, True], 2) == pytest.approx((51 * 1.0 + 50 * 2 / 3) / 101)
    assert interpolated_ap([], 3) == 0.0
    assert interpolated_ap([True, True, True], 5) == pytest.approx(61 / 101)


def test_ignore_regions_suppress_false_positives():
    gt = to_traj([trk(1, [1, 2], [0, 0])])
    pred = to_traj([trk(1, [1, 2], [0, 0]), trk(2, [1, 2], [100, 100])])
    assert evaluate_clear(gt, pred).fp == 2
    ignore = {1: [BBox(95, 0, 120, 20)], 2: [BBox(104, 0, 120, 20)]}
    # frame 2 region covers 6 of 10 columns of the stray box, frame 1 all of them
    assert evaluate_clear(gt, pred, ignore=ignore).fp == 0


@pytest.mark.parametrize("name,case", suite(150), ids=lambda v: v if isinstance(v, str) else "")
def test_against_brute_force(name, case):
    gt, pred = case
    G, P = to_traj(gt), to_traj(pred)
    want = brute_clear(gt, pred)
    got = evaluate_clear(G, P)
    for k in ("fp", "fn", "ids", "fm", "mt", "ml"):
        assert getattr(got, k) == want[k], k
    assert got.mota == pytest.approx(want["mota"], abs=1e-9)
    assert got.motp == pytest.approx(want["motp"], abs=1e-9)
    assert evaluate_idf1(G, P) == pytest.approx(brute_idf1(gt, pred), abs=1e-9)
    table, per_t, mean = brute_track_ap(gt, pred)
    ap = evaluate_track_ap(G, P)
    for c in table:
        for tau in table[c]:
            assert ap.per_class[c][tau] == pytest.approx(table[c][tau], abs=1e-9)
    assert ap.mean == pytest.approx(mean, abs=1e-9)


def _relabel(tracks, offset):
    return [Trajectory(t.track_id * 7 + offset, t.class_id, t.boxes, t.confidence) for t in tracks]


@pytest.mark.parametrize("k", range(40))
def test_relabeling_invariance(k):
    gt, pred = random_cases(40, seed=5)[k]
    G, P = to_traj(gt), to_traj(pred)
    a = evaluate(G, P)
    b = evaluate(_relabel(G, 3), _relabel(P, 11))
    assert a.as_dict() == pytest.approx(b.as_dict())


@pytest.mark.parametrize("k", range(40))
def test_conservation(k):
    gt, pred = random_cases(40, seed=6)[k]
    r = evaluate_clear(to_traj(gt), to_traj(pred))
    assert r.matches + r.fn == r.n_gt
    assert r.matches + r.fp == r.n_pred
    assert r.mt + r.ml <= len(gt)
    assert 0.0 <= evaluate_idf1(to_traj(gt), to_traj(pred)) <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 39), st.floats(0.1, 5.0), st.floats(-0.5, 0.5))
def test_ap_invariant_under_monotone_confidence(k, scale, shift):
    gt, pred = random_cases(40, seed=7)[k]
    G, P = to_traj(gt), to_traj(pred)
    P2 = [Trajectory(t.track_id, t.class_id, t.boxes, t.confidence * scale + shift) for t in P]
    assert evaluate_track_ap(G, P2).mean == pytest.approx(evaluate_track_ap(G, P).mean, abs=1e-12)


def test_report_formatting():
    gt = to_traj([trk(1, range(1, 6), [0] * 5)])
    rep = evaluate(gt, gt)
    d = rep.as_dict()
    assert d["MOTA"] == 1.0 and d["IDS"] == 0 and d["AP@0.50"] == pytest.approx(1.0)
    assert "MOTA" in format_table([("run", rep)])
    assert format_kv(rep).splitlines()[0].count("=") == 1
    only_ap = evaluate(gt, gt, metrics=("ap",))
    assert only_ap.clear is None and only_ap.idf1 is None
