"""
Flow-compensated IoU tracking with cascade matching
===================================================

Per frame, every live track's last box is carried forward by the motion
field, then matched to the frame's detections in three stages:

1. strict IoU gate (``sigma_iou1``);
2. joint IoU (``sigma_iou2``) and appearance (``sigma_app``) gate on the
   leftovers of stage 1;
3. still-unmatched tracks coast on their predicted box for at most
   ``t_max`` frames before they are finished.

Unmatched detections start new tracks.  Tracks are filtered once at the
end (:func:`finalize`) by detected length and peak score.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

from .appearance import Embedding, TrackAppearance, update_track_appearance
from .association import (
    Assignment,
    build_iou_cost,
    build_stage2_cost,
    greedy_solve,
    hungarian_solve,
)
from .geometry import BBox, Detection, class_agnostic_nms
from .motion import MotionField, MotionPolicy, identity_field, should_run_flow, warp_bbox

log = logging.getLogger(__name__)

DETECTED = "detected"
PREDICTED = "predicted"

ACTIVE = "active"
COASTING = "coasting"
FINISHED = "finished"

FlowSource = Union[None, MotionField, Callable[[], Optional[MotionField]]]


class SequenceError(RuntimeError):
    """Frames were fed out of order."""


@dataclass(frozen=True)
class TrackerConfig:
    sigma_iou1: float = 0.5
    sigma_iou2: float = 0.3
    sigma_app: float = 0.4
    sigma_h: float = 0.5
    t_min: int = 3
    t_max: int = 10
    sigma_nms: float = 0.5
    motion_policy: MotionPolicy = MotionPolicy()
    association: str = "hungarian"
    class_agnostic: bool = False
    stage2_cost: str = "appearance"
    ema_alpha: float = 0.0
    # stage 2 on/off; off reproduces the single-stage IoU tracker
    cascade: bool = True
    # False turns the appearance gate off (stage 2 becomes IoU-only)
    use_appearance: bool = True
    trigger_counts: str = "tracks"
    mean_corners: bool = False
    classes: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not 0.0 <= self.sigma_iou2 <= self.sigma_iou1 <= 1.0:
            raise ValueError("need 0 <= sigma_iou2 <= sigma_iou1 <= 1")
        if self.t_min < 1:
            raise ValueError("t_min must be >= 1")
        if self.t_max < 0:
            raise ValueError("t_max must be >= 0")
        if self.association not in ("greedy", "hungarian"):
            raise ValueError(f"unknown association {self.association!r}")
        if self.stage2_cost not in ("appearance", "iou", "mean"):
            raise ValueError(f"unknown stage2_cost {self.stage2_cost!r}")
        if self.trigger_counts not in ("tracks", "detections"):
            raise ValueError(f"unknown trigger_counts {self.trigger_counts!r}")
        if not 0.0 <= self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must lie in [0, 1]")

    @property
    def motion_mode(self) -> str:
        return self.motion_policy.mode

    def with_motion(self, mode: str, trigger_ratio: Optional[float] = None) -> "TrackerConfig":
        ratio = self.motion_policy.trigger_ratio if trigger_ratio is None else trigger_ratio
        return replace(self, motion_policy=MotionPolicy(mode, ratio))


class TrackBox(NamedTuple):
    bbox: BBox
    score: float
    provenance: str


@dataclass
class Track:
    track_id: int
    class_id: int
    boxes: Dict[int, TrackBox] = field(default_factory=dict)
    appearance: Optional[TrackAppearance] = None
    state: str = ACTIVE
    coast_count: int = 0
    max_score: float = 0.0
    last_score: float = 0.0

    @property
    def last_frame(self) -> int:
        return next(reversed(self.boxes))

    @property
    def last_box(self) -> BBox:
        return self.boxes[self.last_frame].bbox

    @property
    def detected_count(self) -> int:
        return sum(1 for b in self.boxes.values() if b.provenance == DETECTED)

    def add_detection(self, frame: int, det: Detection, emb: Optional[Embedding], ema_alpha: float):
        self.boxes[frame] = TrackBox(det.bbox, det.score, DETECTED)
        self.coast_count = 0
        self.state = ACTIVE
        self.max_score = max(self.max_score, det.score)
        self.last_score = det.score
        if emb is not None:
            if self.appearance is None:
                self.appearance = TrackAppearance(emb, ema_alpha)
            else:
                self.appearance = update_track_appearance(self.appearance, emb)

    def add_prediction(self, frame: int, box: BBox):
        self.boxes[frame] = TrackBox(box, self.last_score, PREDICTED)
        self.coast_count += 1
        self.state = COASTING


@dataclass
class TrackSet:
    active: List[Track] = field(default_factory=list)
    finished: List[Track] = field(default_factory=list)
    next_id: int = 1
    frame: int = 0
    # frames on which a motion field was requested from the flow source
    flow_frames: List[int] = field(default_factory=list)


@dataclass
class Tracklet:
    track_id: int
    class_id: int
    frames: List[int]
    boxes: List[BBox]
    scores: List[float]
    provenance: List[str]
    confidence: float

    def __len__(self):
        return len(self.frames)

    def box_map(self) -> Dict[int, BBox]:
        return dict(zip(self.frames, self.boxes))


@dataclass
class _CascadeResult:
    matches: Dict[int, int]
    predicted: List[BBox]
    n_unmatched_dets: int


def _solve(cost, method: str) -> Assignment:
    return hungarian_solve(cost) if method == "hungarian" else greedy_solve(cost)


def _cascade(tracks: Sequence[Track], dets: Sequence[Detection], embs: Sequence[Optional[Embedding]],
             field: MotionField, cfg: TrackerConfig) -> _CascadeResult:
    predicted = [warp_bbox(t.last_box, field, cfg.mean_corners) for t in tracks]
    if cfg.class_agnostic:
        groups = {None: (list(range(len(tracks))), list(range(len(dets))))}
    else:
        groups = {}
        for i, t in enumerate(tracks):
            groups.setdefault(t.class_id, ([], []))[0].append(i)
        for j, d in enumerate(dets):
            groups.setdefault(d.class_id, ([], []))[1].append(j)

    matches: Dict[int, int] = {}
    for key in sorted(groups, key=lambda k: (k is None, k)):
        t_idx, d_idx = groups[key]
        if not t_idx or not d_idx:
            continue
        cost = build_iou_cost([predicted[i] for i in t_idx], [dets[j].bbox for j in d_idx], cfg.sigma_iou1)
        stage1 = _solve(cost, cfg.association)
        for r, c in stage1.pairs:
            matches[t_idx[r]] = d_idx[c]
        if not cfg.cascade:
            continue
        rest_t = [t_idx[r] for r in stage1.unmatched_rows]
        rest_d = [d_idx[c] for c in stage1.unmatched_cols]
        if not rest_t or not rest_d:
            continue
        if cfg.use_appearance:
            apps = [tracks[i].appearance for i in rest_t]
            det_embs = [embs[j] for j in rest_d]
        else:
            apps, det_embs = [None] * len(rest_t), [None] * len(rest_d)
        cost2 = build_stage2_cost(
            [predicted[i] for i in rest_t], [dets[j].bbox for j in rest_d],
            apps, det_embs, cfg.sigma_iou2, cfg.sigma_app, cfg.stage2_cost,
        )
        for r, c in _solve(cost2, cfg.association).pairs:
            matches[rest_t[r]] = rest_d[c]
    return _CascadeResult(matches, predicted, len(dets) - len(matches))


def _resolve_flow(flow: FlowSource) -> MotionField:
    if callable(flow):
        flow = flow()
    return identity_field() if flow is None else flow


def step(ts: TrackSet, frame_dets: Sequence[Detection], flow: FlowSource = None,
         cfg: TrackerConfig = TrackerConfig(),
         embeddings: Optional[Mapping] = None) -> TrackSet:
    """Advance ``ts`` by one frame (in place) and return it.

    ``flow`` is the motion field into this frame, or a zero-argument
    callable producing it; callables are only invoked when the motion
    policy actually needs the field, which is what makes the
    ``flow_on_trigger`` mode cheap.  ``embeddings`` maps a detection's
    ``embedding_id`` to its :class:`Embedding`.
    """
    frame = ts.frame + 1
    for d in frame_dets:
        if d.frame != frame:
            raise SequenceError(f"expected detections for frame {frame}, got frame {d.frame}")

    dets = list(frame_dets)
    if cfg.classes is not None:
        dropped = [d for d in dets if d.class_id not in cfg.classes]
        if dropped:
            log.warning("frame %d: ignoring %d detections of unconfigured classes %s",
                        frame, len(dropped), sorted({d.class_id for d in dropped}))
            dets = [d for d in dets if d.class_id in cfg.classes]

    embs: List[Optional[Embedding]] = []
    for d in dets:
        emb = None
        if embeddings is not None and d.embedding_id is not None:
            emb = embeddings.get(d.embedding_id)
        embs.append(emb)

    tracks = ts.active
    policy = cfg.motion_policy
    if policy.mode == "none" or not tracks:
        result = _cascade(tracks, dets, embs, identity_field(), cfg)
    elif policy.mode == "always_flow":
        ts.flow_frames.append(frame)
        result = _cascade(tracks, dets, embs, _resolve_flow(flow), cfg)
    else:
        result = _cascade(tracks, dets, embs, identity_field(), cfg)
        n_matched = len(result.matches)
        if cfg.trigger_counts == "tracks":
            n_unmatched = len(tracks) - n_matched
        else:
            n_unmatched = result.n_unmatched_dets
        if should_run_flow(n_matched, n_unmatched, policy):
            ts.flow_frames.append(frame)
            result = _cascade(tracks, dets, embs, _resolve_flow(flow), cfg)

    still_live: List[Track] = []
    for i, track in enumerate(tracks):
        j = result.matches.get(i)
        if j is not None:
            track.add_detection(frame, dets[j], embs[j], cfg.ema_alpha)
            still_live.append(track)
        elif track.coast_count < cfg.t_max:
            track.add_prediction(frame, result.predicted[i])
            still_live.append(track)
        else:
            track.state = FINISHED
            ts.finished.append(track)

    used = set(result.matches.values())
    for j, det in enumerate(dets):
        if j in used:
            continue
        track = Track(ts.next_id, det.class_id)
        track.add_detection(frame, det, embs[j], cfg.ema_alpha)
        ts.next_id += 1
        still_live.append(track)

    ts.active = still_live
    ts.frame = frame
    return ts


def finalize(ts: TrackSet, cfg: TrackerConfig = TrackerConfig()) -> List[Tracklet]:
    """Finish all tracks, drop trailing predictions and filter.

    A track survives if it has at least ``t_min`` detected boxes and a peak
    detection score above ``sigma_h``.  Its confidence is the mean detected
    score.
    """
    for track in ts.active:
        track.state = FINISHED
        ts.finished.append(track)
    ts.active = []

    out = []
    for track in sorted(ts.finished, key=lambda t: t.track_id):
        items = list(track.boxes.items())
        while items and items[-1][1].provenance == PREDICTED:
            items.pop()
        detected = [b.score for _, b in items if b.provenance == DETECTED]
        if len(detected) < cfg.t_min or max(detected, default=0.0) <= cfg.sigma_h:
            continue
        out.append(Tracklet(
            track_id=track.track_id,
            class_id=track.class_id,
            frames=[f for f, _ in items],
            boxes=[b.bbox for _, b in items],
            scores=[b.score for _, b in items],
            provenance=[b.provenance for _, b in items],
            confidence=sum(detected) / len(detected),
        ))
    return out


def _frame_lookup(source, frame):
    if source is None:
        return None
    if callable(source):
        return source(frame)
    return source.get(frame)


def run_sequence(all_frames, flows=None, embeddings: Optional[Mapping] = None,
                 cfg: TrackerConfig = TrackerConfig(), n_frames: Optional[int] = None,
                 return_state: bool = False):
    """Track a whole sequence: per-frame NMS, :func:`step` fold, :func:`finalize`.

    ``all_frames`` is either a mapping ``frame -> detections`` or a list
    whose element ``k`` holds frame ``k + 1``.  ``flows`` is a mapping or a
    callable ``frame -> MotionField | None``; it is queried lazily.
    """
    if isinstance(all_frames, Mapping):
        last = max(all_frames, default=0)
        per_frame = [all_frames.get(f, []) for f in range(1, max(last, n_frames or 0) + 1)]
    else:
        per_frame = list(all_frames)
        if n_frames is not None and n_frames > len(per_frame):
            per_frame += [[]] * (n_frames - len(per_frame))

    ts = TrackSet()
    for idx, dets in enumerate(per_frame):
        frame = idx + 1
        kept = class_agnostic_nms(dets, cfg.sigma_nms)
        kept.sort(key=lambda d: d.det_index)
        step(ts, kept, lambda f=frame: _frame_lookup(flows, f), cfg, embeddings)
    tracklets = finalize(ts, cfg)
    if return_state:
        return tracklets, ts
    return tracklets
