from dataclasses import replace

import numpy as np
import pytest

from flowtrack.geometry import BBox, iou
from flowtrack.motion import sample, warp_bbox
from flowtrack.synth import (
    ObjectSpec, ScenarioSpec, ablation_ladder, format_ablation, generate, make_scenario, run_ablation,
)
from flowtrack.tracker import TrackerConfig


def _spec(**kw):
    base = dict(frames=10, width=320, height=240,
                objects=(ObjectSpec(1, 10, BBox(50, 50, 70, 80), (1.0, 0.5)),
                         ObjectSpec(3, 8, BBox(150, 100, 180, 120), (-1.0, 0.0), 4)))
    base.update(kw)
    return ScenarioSpec(**base)


def test_noise_free_detections_equal_ground_truth():
    seq = generate(_spec())
    gt = {(f, b) for t in seq.gt for f, b in t.boxes.items()}
    dets = {(f, d.bbox) for f, ds in seq.detections.items() for d in ds}
    assert gt == dets


def test_pan_translates_gt_and_emits_constant_flow():
    spec = _spec(objects=(ObjectSpec(1, 10, BBox(10, 10, 30, 30)),),
                 camera_pan=tuple((f, 5.0, 0.0) for f in range(2, 11)))
    seq = generate(spec)
    (t,) = seq.gt
    for f in range(2, 11):
        assert t.boxes[f] == t.boxes[f - 1].translate(5, 0)
        assert sample(seq.flows[f], 0, 0) == (5.0, 0.0)


def test_seeds_change_noise_not_geometry():
    a = generate(_spec(seed=1, drop_prob=0.3, loc_jitter=1.0))
    b = generate(_spec(seed=2, drop_prob=0.3, loc_jitter=1.0))
    assert [t.boxes for t in a.gt] == [t.boxes for t in b.gt]
    dets = lambda s: [(f, d.bbox) for f, ds in sorted(s.detections.items()) for d in ds]
    assert dets(a) != dets(b)


def test_generation_is_deterministic():
    spec = make_scenario("pan", seed=4, frames=30)
    a, b = generate(spec), generate(spec)
    assert a.detections == b.detections
    assert all(a.embeddings[k] == b.embeddings[k] for k in a.embeddings)


def test_keystone_warp():
    spec = make_scenario("pan", seed=2, frames=60, loc_jitter=0.0)
    spec = replace(spec, objects=tuple(replace(o, velocity=(0.0, 0.0)) for o in spec.objects))
    seq = generate(spec)
    n = 0
    for t in seq.gt:
        for f in sorted(t.boxes):
            # boxes cut by the image border are not pure translations
            if f - 1 in t.boxes and t.boxes[f - 1].width == t.boxes[f].width:
                got = warp_bbox(t.boxes[f - 1], seq.flows[f])
                assert np.allclose(got.as_array(), t.boxes[f].as_array(), atol=1e-9)
                n += 1
    assert n > 100


def test_detection_count_statistics():
    objs = tuple(ObjectSpec(1, 300, BBox(20 + 40 * i, 50, 45 + 40 * i, 80)) for i in range(5))
    spec = ScenarioSpec(frames=300, width=320, height=240, objects=objs, drop_prob=0.2, fp_rate=0.5, seed=11)
    seq = generate(spec)
    n = sum(len(v) for v in seq.detections.values())
    n_gt = 5 * 300
    mean = n_gt * 0.8 + 0.5 * 300
    sd = np.sqrt(n_gt * 0.8 * 0.2 + 0.5 * 300)
    assert abs(n - mean) < 3 * sd


def test_embeddings_separate_identities():
    # noise-free boxes identify the source object exactly
    objs = tuple(ObjectSpec(1, 40, BBox(10 + 35 * i, 20, 40 + 35 * i, 50)) for i in range(8))
    seq = generate(ScenarioSpec(frames=40, width=320, height=240, objects=objs, embed_noise=0.05, seed=3))
    owner = {(f, b): t.track_id - 1 for t in seq.gt for f, b in t.boxes.items()}
    ids = seq.identity_vectors
    worst_intra, best_inter = 0.0, 2.0
    for f, ds in seq.detections.items():
        for d in ds:
            e = seq.embeddings[d.embedding_id].values
            k = owner[(f, d.bbox)]
            dist = 1.0 - ids @ e
            worst_intra = max(worst_intra, dist[k])
            best_inter = min(best_inter, np.delete(dist, k).min())
    assert worst_intra < best_inter


def test_crowded_overlap_and_presets():
    spec = make_scenario("crowded", seed=0, objects=4)
    boxes = [o.box for o in spec.objects]
    for i in range(4):
        for j in range(i + 1, 4):
            assert iou(boxes[i], boxes[j]) >= 0.3
    with pytest.raises(ValueError):
        make_scenario("crowded", objects=3)
    with pytest.raises(ValueError):
        make_scenario("foggy")


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(drop_prob=1.5)
    with pytest.raises(ValueError):
        _spec(frames=0)


def test_ablation_static_all_perfect():
    rows = run_ablation(make_scenario("static", seed=0, frames=20))
    assert [n for n, _ in rows] == [n for n, _ in ablation_ladder()]
    assert all(r.clear.mota == 1.0 for _, r in rows)
    assert "[ok]" in format_ablation(rows)


def test_write_bundle(tmp_path):
    from flowtrack.io import load_bundle
    seq = generate(make_scenario("pan", seed=1, frames=12))
    seq.write(tmp_path / "b")
    bundle = load_bundle(tmp_path / "b")
    assert bundle.n_frames == 12
    assert sum(map(len, bundle.detections.values())) == sum(map(len, seq.detections.values()))
    f = max(seq.flows)
    assert sample(bundle.flows(f), 3, 3) == pytest.approx(sample(seq.flows[f], 3, 3))
