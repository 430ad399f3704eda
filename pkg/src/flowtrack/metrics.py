"""
MOT evaluation
==============

* CLEAR-MOT (MOTA, MOTP, FP, FN, IDS, FM) plus MT / ML coverage counts,
  using correspondence persistence between frames and Hungarian matching
  on ``1 - IoU`` for everything else.
* IDF1 from a global min-cost matching between whole trajectories.
* Tracklet AP: tracklets ranked by confidence and matched greedily to
  ground-truth tracklets by tracklet-IoU at thresholds 0.25 / 0.5 / 0.75,
  101-point interpolated AP per class, averaged over classes and thresholds.

MOTP is the mean IoU of matched pairs, a ratio in ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .association import INFEASIBLE, hungarian_solve
from .geometry import BBox, iou

AP_THRESHOLDS = (0.25, 0.5, 0.75)


class EvaluationError(ValueError):
    pass


@dataclass
class Trajectory:
    """One identity: ground truth or tracker output."""

    track_id: int
    class_id: int
    boxes: Dict[int, BBox]
    confidence: float = 1.0


@dataclass
class ClearResult:
    mota: float
    motp: float
    fp: int
    fn: int
    ids: int
    fm: int
    mt: int
    ml: int
    matches: int
    n_gt: int
    n_pred: int


@dataclass
class APResult:
    per_class: Dict[int, Dict[float, float]]
    per_threshold: Dict[float, float]
    mean: float


@dataclass
class EvalReport:
    clear: Optional[ClearResult] = None
    idf1: Optional[float] = None
    ap: Optional[APResult] = None

    def as_dict(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        if self.clear is not None:
            c = self.clear
            out.update(MOTA=c.mota, MOTP=c.motp)
        if self.idf1 is not None:
            out["IDF1"] = self.idf1
        if self.clear is not None:
            c = self.clear
            out.update(MT=c.mt, ML=c.ml, FP=c.fp, FN=c.fn, IDS=c.ids, FM=c.fm)
        if self.ap is not None:
            out["AP"] = self.ap.mean
            for t, v in self.ap.per_threshold.items():
                out[f"AP@{t:.2f}"] = v
            for cls in sorted(self.ap.per_class):
                vals = self.ap.per_class[cls]
                out[f"AP_class{cls}"] = float(sum(vals.values()) / len(vals))
        return out


def _by_frame(tracks: Iterable[Trajectory]) -> Dict[int, Dict[int, BBox]]:
    out: Dict[int, Dict[int, BBox]] = {}
    for t in tracks:
        for f, b in t.boxes.items():
            out.setdefault(f, {})[t.track_id] = b
    return out


def _covered(box: BBox, regions: Sequence[BBox], min_cover: float = 0.5) -> bool:
    if box.area <= 0:
        return False
    for r in regions:
        iw = min(box.x2, r.x2) - max(box.x1, r.x1)
        ih = min(box.y2, r.y2) - max(box.y1, r.y1)
        if iw > 0 and ih > 0 and iw * ih / box.area >= min_cover:
            return True
    return False


def evaluate_clear(gt: Sequence[Trajectory], pred: Sequence[Trajectory], iou_gate: float = 0.5,
                   ignore: Optional[Mapping[int, Sequence[BBox]]] = None) -> ClearResult:
    """CLEAR-MOT counts.

    Unmatched predictions covering an ignore region by at least half of
    their area are dropped rather than counted as false positives.
    """
    gt_frames = _by_frame(gt)
    pred_frames = _by_frame(pred)
    n_gt = sum(len(t.boxes) for t in gt)
    if n_gt == 0:
        raise EvaluationError("ground truth is empty; MOTA is undefined")
    ignore = ignore or {}

    last_match: Dict[int, int] = {}
    tracked: Dict[int, List[bool]] = {t.track_id: [] for t in gt}
    fp = fn = ids = matches = n_pred = 0
    iou_sum = 0.0
    for f in sorted(set(gt_frames) | set(pred_frames)):
        G = gt_frames.get(f, {})
        P = pred_frames.get(f, {})
        n_pred += len(P)
        pairs: Dict[int, int] = {}
        used_p = set()
        for g in sorted(G):
            p = last_match.get(g)
            if p is not None and p in P and p not in used_p and iou(G[g], P[p]) >= iou_gate:
                pairs[g] = p
                used_p.add(p)
        rest_g = [g for g in sorted(G) if g not in pairs]
        rest_p = [p for p in sorted(P) if p not in used_p]
        if rest_g and rest_p:
            cost = np.full((len(rest_g), len(rest_p)), INFEASIBLE)
            for i, g in enumerate(rest_g):
                for j, p in enumerate(rest_p):
                    o = iou(G[g], P[p])
                    if o >= iou_gate:
                        cost[i, j] = 1.0 - o
            for i, j in hungarian_solve(cost).pairs:
                g, p = rest_g[i], rest_p[j]
                if g in last_match and last_match[g] != p:
                    ids += 1
                pairs[g] = p
                used_p.add(p)
        for g, p in pairs.items():
            last_match[g] = p
            iou_sum += iou(G[g], P[p])
        matches += len(pairs)
        fn += len(G) - len(pairs)
        regions = ignore.get(f, ())
        fp += sum(1 for p in P if p not in used_p and not _covered(P[p], regions))
        for g in G:
            tracked[g].append(g in pairs)

    fm = mt = ml = 0
    for flags in tracked.values():
        if not flags:
            continue
        was_tracked = gap = False
        for hit in flags:
            if hit:
                if gap and was_tracked:
                    fm += 1
                was_tracked, gap = True, False
            else:
                gap = True
        ratio = sum(flags) / len(flags)
        if ratio > 0.8:
            mt += 1
        elif ratio < 0.2:
            ml += 1

    return ClearResult(
        mota=1.0 - (fn + fp + ids) / n_gt,
        motp=iou_sum / matches if matches else 0.0,
        fp=fp, fn=fn, ids=ids, fm=fm, mt=mt, ml=ml,
        matches=matches, n_gt=n_gt, n_pred=n_pred,
    )


def _id_overlap(g: Trajectory, p: Trajectory, iou_gate: float) -> int:
    common = g.boxes.keys() & p.boxes.keys()
    return sum(1 for f in common if iou(g.boxes[f], p.boxes[f]) >= iou_gate)


def evaluate_idf1(gt: Sequence[Trajectory], pred: Sequence[Trajectory], iou_gate: float = 0.5) -> float:
    """Identity F1 over the best one-to-one trajectory matching."""
    n_gt_boxes = sum(len(t.boxes) for t in gt)
    n_pred_boxes = sum(len(t.boxes) for t in pred)
    if n_gt_boxes == 0:
        return 1.0 if n_pred_boxes == 0 else 0.0
    if n_pred_boxes == 0:
        return 0.0

    ng, npr = len(gt), len(pred)
    n = ng + npr
    # rows: gt then pred-dummies; cols: pred then gt-dummies
    cost = np.full((n, n), INFEASIBLE)
    for i, g in enumerate(gt):
        for j, p in enumerate(pred):
            tp = _id_overlap(g, p, iou_gate)
            cost[i, j] = len(g.boxes) + len(p.boxes) - 2 * tp
        cost[i, npr + i] = len(g.boxes)
    for j, p in enumerate(pred):
        cost[ng + j, j] = len(p.boxes)
    cost[ng:, npr:] = 0.0
    total = hungarian_solve(cost).total_cost(cost)
    # total = IDFN + IDFP; IDTP follows from the box counts
    idtp = (n_gt_boxes + n_pred_boxes - total) / 2.0
    return 2.0 * idtp / (n_gt_boxes + n_pred_boxes)


def tracklet_iou(a: Trajectory, b: Trajectory) -> float:
    """Mean per-frame IoU over the union of both frame sets."""
    frames = a.boxes.keys() | b.boxes.keys()
    if not frames:
        return 0.0
    common = a.boxes.keys() & b.boxes.keys()
    return sum(iou(a.boxes[f], b.boxes[f]) for f in common) / len(frames)


def interpolated_ap(tp_flags: Sequence[bool], n_gt: int, points: int = 101) -> float:
    if n_gt == 0 or len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=float))
    precision = tp / np.arange(1, len(tp) + 1)
    recall = tp / n_gt
    # running max from the right: best precision at recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for r in np.linspace(0.0, 1.0, points):
        # tolerance keeps e.g. recall 3/5 on the 0.6 sample point
        idx = np.searchsorted(recall, r - 1e-12, side="left")
        if idx < len(recall):
            total += envelope[idx]
    return total / points


def evaluate_track_ap(gt: Sequence[Trajectory], pred: Sequence[Trajectory],
                      thresholds: Sequence[float] = AP_THRESHOLDS) -> APResult:
    classes = sorted({t.class_id for t in gt if t.boxes})
    if not classes:
        raise EvaluationError("ground truth has no tracklets")
    per_class: Dict[int, Dict[float, float]] = {}
    for cls in classes:
        g_cls = [t for t in gt if t.class_id == cls and t.boxes]
        p_cls = sorted((t for t in pred if t.class_id == cls and t.boxes),
                       key=lambda t: (-t.confidence, t.track_id))
        ious = np.array([[tracklet_iou(p, g) for g in g_cls] for p in p_cls]).reshape(len(p_cls), len(g_cls))
        per_class[cls] = {}
        for tau in thresholds:
            claimed = np.zeros(len(g_cls), dtype=bool)
            flags = []
            for k in range(len(p_cls)):
                row = np.where(claimed, -1.0, ious[k])
                best = int(np.argmax(row)) if len(g_cls) else -1
                hit = best >= 0 and row[best] > tau
                if hit:
                    claimed[best] = True
                flags.append(hit)
            per_class[cls][tau] = interpolated_ap(flags, len(g_cls))
    per_threshold = {tau: float(np.mean([per_class[c][tau] for c in classes])) for tau in thresholds}
    return APResult(per_class, per_threshold, float(np.mean(list(per_threshold.values()))))


def evaluate(gt: Sequence[Trajectory], pred: Sequence[Trajectory],
             ignore: Optional[Mapping[int, Sequence[BBox]]] = None,
             metrics: Iterable[str] = ("clear", "idf1", "ap"), iou_gate: float = 0.5) -> EvalReport:
    metrics = set(metrics)
    unknown = metrics - {"clear", "idf1", "ap"}
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    if not any(t.boxes for t in gt):
        raise EvaluationError("ground truth is empty")
    report = EvalReport()
    if "clear" in metrics:
        report.clear = evaluate_clear(gt, pred, iou_gate, ignore)
    if "idf1" in metrics:
        report.idf1 = evaluate_idf1(gt, pred, iou_gate)
    if "ap" in metrics:
        report.ap = evaluate_track_ap(gt, pred)
    return report


def tracklets_to_trajectories(tracklets) -> List[Trajectory]:
    return [Trajectory(t.track_id, t.class_id, t.box_map(), t.confidence) for t in tracklets]


_PCT = {"MOTA", "MOTP", "IDF1", "AP"}


def format_table(rows: Sequence[Tuple[str, EvalReport]]) -> str:
    """Plain-text comparison table, one row per named report.

    Ratios are printed as percentages.
    """
    if not rows:
        return ""
    keys: List[str] = []
    for _, rep in rows:
        for k in rep.as_dict():
            if k not in keys:
                keys.append(k)
    name_w = max(len("Method"), max(len(n) for n, _ in rows))
    cells = []
    for _, rep in rows:
        d = rep.as_dict()
        line = []
        for k in keys:
            v = d.get(k)
            if v is None:
                line.append("-")
            elif k in _PCT or k.startswith("AP"):
                line.append(f"{100.0 * v:.1f}")
            else:
                line.append(str(int(v)))
        cells.append(line)
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    out = ["  ".join(["Method".ljust(name_w)] + [k.rjust(w) for k, w in zip(keys, widths)])]
    for (name, _), line in zip(rows, cells):
        out.append("  ".join([name.ljust(name_w)] + [c.rjust(w) for c, w in zip(line, widths)]))
    return "\n".join(out)


def format_kv(report: EvalReport) -> str:
    lines = []
    for k, v in report.as_dict().items():
        lines.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
    return "\n".join(lines) + "\n"
