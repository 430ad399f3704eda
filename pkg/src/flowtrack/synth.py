"""
Synthetic tracking scenarios
============================

Deterministic sequences with known ground truth: constant-velocity objects
in world coordinates, a camera that pans by pure translation, noisy
detections (misses, corner jitter, false positives), a per-frame flow
field equal to the camera pan, and per-identity appearance vectors.

Random draws come from independent streams so the ground-truth geometry
depends only on ``kinematics_seed`` while ``seed`` drives detection noise
and embeddings.  Per frame the detection stream is consumed in this order:
for each live object (by id) one miss draw, then if kept four corner
offsets (only when ``loc_jitter > 0``) and one score; then the
false-positive count (only when ``fp_rate > 0``) and per false positive a
size pick, two position draws, one score and one class; finally one
permutation of the frame's detections.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .appearance import Embedding
from .geometry import BBox, Detection
from .io import (
    DET_FILE, EMB_FILE, FLOW_DIR, GT_FILE, MOTION_FILE, SEQINFO_FILE,
    Row, SeqInfo, SequenceBundle, flow_path, write_embeddings, write_flo,
    write_motion_csv, write_seqinfo, write_tracks_csv,
)
from .metrics import EvalReport, Trajectory, evaluate, format_table, tracklets_to_trajectories
from .motion import MotionField
from .tracker import TrackerConfig, run_sequence

SCENARIOS = ("static", "pan", "dropout", "crowded")


@dataclass(frozen=True)
class ObjectSpec:
    birth: int
    death: int
    box: BBox
    velocity: Tuple[float, float] = (0.0, 0.0)
    class_id: int = 1


@dataclass(frozen=True)
class ScenarioSpec:
    frames: int
    width: int
    height: int
    objects: Tuple[ObjectSpec, ...]
    # (frame, dx, dy): image-space shift of static content from frame-1 to frame
    camera_pan: Tuple[Tuple[int, float, float], ...] = ()
    sigma_world: float = 0.0
    drop_prob: float = 0.0
    fp_rate: float = 0.0
    loc_jitter: float = 0.0
    embed_dim: int = 16
    embed_noise: float = 0.05
    seed: int = 0
    kinematics_seed: int = 0

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must lie in [0, 1]")
        for name in ("fp_rate", "loc_jitter", "sigma_world", "embed_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        for o in self.objects:
            if not 1 <= o.birth <= o.death:
                raise ValueError(f"bad object lifetime {o.birth}..{o.death}")

    def pan_at(self) -> Dict[int, Tuple[float, float]]:
        out: Dict[int, Tuple[float, float]] = {}
        for f, dx, dy in self.camera_pan:
            ox, oy = out.get(f, (0.0, 0.0))
            out[f] = (ox + dx, oy + dy)
        return out


@dataclass
class SyntheticSequence:
    spec: ScenarioSpec
    gt: List[Trajectory]
    detections: Dict[int, List[Detection]]
    flows: Dict[int, MotionField]
    embeddings: Dict[Tuple[int, int], Embedding]
    identity_vectors: np.ndarray = field(repr=False, default=None)

    @property
    def info(self) -> SeqInfo:
        return SeqInfo(self.spec.width, self.spec.height, self.spec.frames)

    def bundle(self) -> SequenceBundle:
        return SequenceBundle(self.detections, self.info, self.flows.get, self.embeddings, self.gt, {})

    def run(self, cfg: TrackerConfig, return_state: bool = False):
        return run_sequence(self.detections, self.flows.get, self.embeddings, cfg,
                            n_frames=self.spec.frames, return_state=return_state)

    def write(self, directory, flow_format: str = "flo") -> Path:
        """Write the on-disk bundle; ``flow_format`` is ``flo`` (dense, image-sized) or ``csv``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        gt_rows = [Row(f, t.track_id, b, 1.0, t.class_id, 1.0)
                   for t in self.gt for f, b in sorted(t.boxes.items())]
        write_tracks_csv(d / GT_FILE, gt_rows)
        det_rows = [Row(f, -1, det.bbox, det.score, det.class_id, 1.0)
                    for f in sorted(self.detections) for det in self.detections[f]]
        write_tracks_csv(d / DET_FILE, det_rows)
        write_embeddings(d / EMB_FILE, self.embeddings)
        write_seqinfo(d / SEQINFO_FILE, self.info)
        if flow_format == "flo":
            (d / FLOW_DIR).mkdir(exist_ok=True)
            h, w = self.spec.height, self.spec.width
            for frame in sorted(self.flows):
                u, v = self.flows[frame].uv
                dense = np.empty((h, w, 2), dtype=np.float32)
                dense[..., 0] = u
                dense[..., 1] = v
                write_flo(flow_path(d / FLOW_DIR, frame), dense)
        elif flow_format == "csv":
            write_motion_csv(d / MOTION_FILE, self.flows)
        else:
            raise ValueError(f"unknown flow format {flow_format!r}")
        return d


def _identity_vectors(rng: np.random.Generator, n: int, dim: int, noise: float,
                      margin: float = 0.1, attempts: int = 200) -> np.ndarray:
    """Random unit vectors, redrawn until noisy copies stay closer to their own identity.

    For ``n <= dim`` the vectors are orthonormal.  The check bounds the
    intra-identity distance by that of a copy perturbed with a noise vector
    of norm ``noise * (sqrt(dim) + 4)`` and requires the closest pair of
    identities to be ``margin`` further apart.
    """
    if n == 0:
        return np.zeros((0, dim))
    for _ in range(attempts):
        raw = rng.standard_normal((max(n, 1), dim))
        if n <= dim:
            q, _ = np.linalg.qr(raw.T)
            vecs = q.T[:n]
        else:
            vecs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        if n < 2:
            return vecs
        sims = vecs @ vecs.T
        np.fill_diagonal(sims, -np.inf)
        min_inter = 1.0 - sims.max()
        intra = 1.0 - 1.0 / np.sqrt(1.0 + (noise * (np.sqrt(dim) + 4.0)) ** 2)
        if intra + margin < min_inter:
            return vecs
    raise ValueError("could not draw separable identity embeddings; raise embed_dim or lower embed_noise")


def _noisy_embedding(rng: np.random.Generator, base: np.ndarray, noise: float) -> Embedding:
    v = base + noise * rng.standard_normal(base.shape)
    if not np.any(v):
        v = base
    return Embedding(v)


def generate(spec: ScenarioSpec) -> SyntheticSequence:
    det_seq, emb_seq = np.random.SeedSequence(spec.seed).spawn(2)
    det_rng = np.random.default_rng(det_seq)
    emb_rng = np.random.default_rng(emb_seq)
    kin_rng = np.random.default_rng(spec.kinematics_seed)

    pans = spec.pan_at()
    cum = np.zeros((spec.frames + 1, 2))
    for f in range(2, spec.frames + 1):
        cum[f] = cum[f - 1] + pans.get(f, (0.0, 0.0))

    # ground truth
    gt = [Trajectory(i + 1, o.class_id, {}) for i, o in enumerate(spec.objects)]
    alive = [True] * len(spec.objects)
    for f in range(1, spec.frames + 1):
        for i, o in enumerate(spec.objects):
            if not (o.birth <= f <= o.death) or not alive[i]:
                continue
            k = f - o.birth
            jx, jy = kin_rng.normal(0.0, spec.sigma_world, 2) if spec.sigma_world > 0 else (0.0, 0.0)
            dx = o.velocity[0] * k + jx + cum[f, 0]
            dy = o.velocity[1] * k + jy + cum[f, 1]
            box = o.box.translate(dx, dy).clip(spec.width, spec.height)
            if box is None:
                # once seen, leaving the image ends the identity (frames stay contiguous)
                if gt[i].boxes:
                    alive[i] = False
                continue
            gt[i].boxes[f] = box

    ids = _identity_vectors(emb_rng, len(spec.objects), spec.embed_dim, spec.embed_noise)
    classes = sorted({o.class_id for o in spec.objects}) or [1]
    sizes = [(o.box.width, o.box.height) for o in spec.objects] or [(20.0, 20.0)]

    detections: Dict[int, List[Detection]] = {}
    embeddings: Dict[Tuple[int, int], Embedding] = {}
    for f in range(1, spec.frames + 1):
        items: List[Tuple[BBox, float, int, Optional[int]]] = []
        for t in gt:
            box = t.boxes.get(f)
            if box is None:
                continue
            if det_rng.random() < spec.drop_prob:
                continue
            n = det_rng.normal(0.0, spec.loc_jitter, 4) if spec.loc_jitter > 0 else np.zeros(4)
            score = det_rng.uniform(0.6, 1.0)
            noisy = BBox.from_corners(box.x1 + n[0], box.y1 + n[1], box.x2 + n[2], box.y2 + n[3])
            noisy = noisy.clip(spec.width, spec.height)
            if noisy is not None:
                items.append((noisy, score, t.class_id, t.track_id - 1))
        n_fp = det_rng.poisson(spec.fp_rate) if spec.fp_rate > 0 else 0
        for _ in range(n_fp):
            w, h = sizes[int(det_rng.integers(len(sizes)))]
            x = det_rng.uniform(0.0, max(spec.width - w, 1.0))
            y = det_rng.uniform(0.0, max(spec.height - h, 1.0))
            score = det_rng.uniform(0.1, 0.6)
            cls = classes[int(det_rng.integers(len(classes)))]
            box = BBox(x, y, x + w, y + h).clip(spec.width, spec.height)
            if box is not None:
                items.append((box, score, cls, None))
        order = det_rng.permutation(len(items))
        dets = []
        for j, idx in enumerate(order):
            box, score, cls, obj = items[idx]
            key = (f, j)
            if obj is None:
                embeddings[key] = Embedding(emb_rng.standard_normal(spec.embed_dim))
            else:
                embeddings[key] = _noisy_embedding(emb_rng, ids[obj], spec.embed_noise)
            dets.append(Detection(f, box, float(score), cls, j, key))
        if dets:
            detections[f] = dets

    flows = {f: MotionField.constant(*pans.get(f, (0.0, 0.0))) for f in range(2, spec.frames + 1)}
    gt = [t for t in gt if t.boxes]
    return SyntheticSequence(spec, gt, detections, flows, embeddings, ids)


def _grid_layout(rng, n, width, height, size_range, margin, min_gap):
    """Non-overlapping square-ish boxes placed on a jittered grid."""
    cols = int(np.ceil(np.sqrt(n * (width - 2 * margin) / max(height - 2 * margin, 1))))
    cols = max(cols, 1)
    rows = int(np.ceil(n / cols))
    cell_w = (width - 2 * margin) / cols
    cell_h = (height - 2 * margin) / max(rows, 1)
    boxes = []
    for k in range(n):
        r, c = divmod(k, cols)
        w = rng.uniform(*size_range)
        h = rng.uniform(*size_range)
        slack_x = max(cell_w - w - min_gap, 0.0)
        slack_y = max(cell_h - h - min_gap, 0.0)
        x = margin + c * cell_w + min_gap / 2 + rng.uniform(0, slack_x)
        y = margin + r * cell_h + min_gap / 2 + rng.uniform(0, slack_y)
        boxes.append(BBox(x, y, x + w, y + h))
    return boxes


def make_scenario(name: str, seed: int = 0, frames: int = 100, objects: int = 8,
                  pan_period: int = 5, **overrides) -> ScenarioSpec:
    """Preset scenarios.

    ``static``
        noise-free, motionless, non-overlapping objects.
    ``pan``
        near-static objects; every ``pan_period``-th frame the camera jumps
        by about 1.1 box widths, alternating left and right.
    ``dropout``
        slowly moving objects, 20 % missed detections, no camera motion.
    ``crowded``
        a tight cluster of drifting, overlapping objects of one class with
        distinct appearance.
    """
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    layout = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    width, height = 320, 240
    pans: Tuple[Tuple[int, float, float], ...] = ()
    classes = (1, 4)

    if name == "static":
        boxes = _grid_layout(layout, objects, width, height, (18, 28), 10, 10)
        objs = [ObjectSpec(1, frames, b, (0.0, 0.0), classes[k % 2]) for k, b in enumerate(boxes)]
        params = dict(drop_prob=0.0, fp_rate=0.0, loc_jitter=0.0)
    elif name == "pan":
        box_w = 24.0
        shift = round(1.1 * box_w)
        boxes = _grid_layout(layout, objects, width, height, (box_w, box_w), shift + 8, 14)
        objs = [ObjectSpec(1, frames, b, tuple(layout.uniform(-0.1, 0.1, 2)), classes[k % 2])
                for k, b in enumerate(boxes)]
        pans = tuple((f, shift if (f // pan_period) % 2 else -shift, 0.0)
                     for f in range(pan_period, frames + 1, pan_period))
        params = dict(drop_prob=0.02, fp_rate=0.1, loc_jitter=0.5)
    elif name == "dropout":
        boxes = _grid_layout(layout, objects, width, height, (20, 30), 30, 16)
        objs = [ObjectSpec(1, frames, b, tuple(layout.uniform(-0.2, 0.2, 2)), classes[k % 2])
                for k, b in enumerate(boxes)]
        params = dict(drop_prob=0.2, fp_rate=0.0, loc_jitter=0.5)
    else:
        if objects < 4:
            raise ValueError("the crowded scenario needs at least 4 objects")
        # clusters of 4 boxes (40 px) on a circle of radius 8: every pair in a
        # cluster overlaps with IoU in [0.37, 0.48]
        n_clusters = int(np.ceil(objects / 4))
        cols = int(np.ceil(np.sqrt(n_clusters)))
        rows = int(np.ceil(n_clusters / cols))
        objs = []
        for k in range(objects):
            c = k // 4
            cx = (c % cols + 0.5) * width / cols - 20.0
            cy = (c // cols + 0.5) * height / rows - 20.0
            ang = 2 * np.pi * (k % 4) / 4 + 0.3
            x, y = cx + 8.0 * np.cos(ang), cy + 8.0 * np.sin(ang)
            vel = tuple(layout.uniform(-0.15, 0.15, 2))
            objs.append(ObjectSpec(1, frames, BBox(x, y, x + 40.0, y + 40.0), vel, 1))
        params = dict(drop_prob=0.1, fp_rate=0.0, loc_jitter=2.0, embed_noise=0.05)

    params.update(overrides)
    return ScenarioSpec(frames=frames, width=width, height=height, objects=tuple(objs),
                        camera_pan=pans, seed=seed, kinematics_seed=seed, **params)


def ablation_ladder(base: Optional[TrackerConfig] = None) -> List[Tuple[str, TrackerConfig]]:
    """Baseline greedy IoU tracker, then one added component per row."""
    base = base or TrackerConfig()
    t_max = base.t_max
    baseline = replace(base, association="greedy", cascade=False, t_max=0).with_motion("none")
    hung = replace(baseline, association="hungarian")
    motion = hung.with_motion("always_flow")
    aux = replace(motion, t_max=t_max)
    cascade = replace(aux, cascade=True)
    return [
        ("IoU tracker", baseline),
        ("+ hungarian", hung),
        ("+ motion estimation", motion),
        ("+ auxiliary tracker", aux),
        ("+ cascade matching", cascade),
    ]


def evaluate_run(seq: SyntheticSequence, cfg: TrackerConfig, metrics=("clear", "idf1", "ap")) -> EvalReport:
    tracklets = seq.run(cfg)
    return evaluate(seq.gt, tracklets_to_trajectories(tracklets), metrics=metrics)


def run_ablation(spec, config_grid: Optional[Sequence[Tuple[str, TrackerConfig]]] = None
                 ) -> List[Tuple[str, EvalReport]]:
    """Evaluate every named config on one scenario (a spec, a generated sequence or a bundle)."""
    if isinstance(spec, ScenarioSpec):
        spec = generate(spec)
    grid = config_grid if config_grid is not None else ablation_ladder()
    rows = []
    for name, cfg in grid:
        if isinstance(spec, SyntheticSequence):
            rows.append((name, evaluate_run(spec, cfg)))
        else:
            tracklets = run_sequence(spec.detections, spec.flows, spec.embeddings, cfg, n_frames=spec.n_frames)
            rows.append((name, evaluate(spec.gt, tracklets_to_trajectories(tracklets), spec.ignore)))
    return rows


def format_ablation(rows: Sequence[Tuple[str, EvalReport]]) -> str:
    """Comparison table plus a line per row flagging MOTA / IDS changes against the row above."""
    lines = [format_table(rows)]
    for (prev_name, prev), (name, rep) in zip(rows, rows[1:]):
        if prev.clear is None or rep.clear is None:
            continue
        d_mota = rep.clear.mota - prev.clear.mota
        ok = "ok" if d_mota >= 0 else "MOTA DROP"
        lines.append(f"[{ok}] {name}: MOTA {100 * d_mota:+.1f}, IDS {rep.clear.ids - prev.clear.ids:+d}")
    return "\n".join(lines)
