"""
File formats
============

* MOT-Challenge CSV: ``frame,id,left,top,width,height,conf,class,vis[,...]``;
  ``id == -1`` marks a detection.
* VisDrone CSV: ``frame,target_id,left,top,width,height,score,category,
  truncation,occlusion``; category 0 is an ignored region.
* Middlebury ``.flo``: little-endian float32 magic 202021.25, int32 width,
  int32 height, then ``width * height`` interleaved float32 ``(u, v)`` pairs.
* Embedding CSV: header ``frame,det_index,dim=D`` then
  ``frame,det_index,f0,...,f{D-1}`` rows.
* Motion sidecar CSV: ``frame,a,b,c,d,e,f`` affine coefficients per frame.
* ``seqinfo``: ``key=value`` lines with ``width``, ``height``, ``frames``.
* Tracker config: ``key = value`` lines, ``#`` comments.

A sequence bundle directory holds ``det.txt``, optionally ``gt.txt``,
``embeddings.csv``, ``motion.csv``, ``flow/%06d.flo`` and ``seqinfo.ini``.
Flow file ``t`` describes the motion from frame ``t-1`` into frame ``t``.
"""

from __future__ import annotations

import logging
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .appearance import Embedding, EmbeddingError
from .geometry import BBox, Detection
from .metrics import Trajectory
from .motion import MotionField, MotionPolicy

log = logging.getLogger(__name__)

FLO_MAGIC = 202021.25
FLO_MAGIC_BYTES = struct.pack("<f", FLO_MAGIC)

DET_FILE = "det.txt"
GT_FILE = "gt.txt"
EMB_FILE = "embeddings.csv"
MOTION_FILE = "motion.csv"
SEQINFO_FILE = "seqinfo.ini"
FLOW_DIR = "flow"


class FormatError(ValueError):
    """Malformed input; the message carries the file and line or offset."""


class Row(NamedTuple):
    frame: int
    track_id: int
    bbox: BBox
    score: float
    class_id: int
    visibility: float


@dataclass
class CsvContent:
    rows: List[Row] = field(default_factory=list)
    ignore: Dict[int, List[BBox]] = field(default_factory=dict)

    def detections(self) -> Dict[int, List[Detection]]:
        """Rows grouped per frame as detections; ``det_index`` is the in-frame file order."""
        out: Dict[int, List[Detection]] = {}
        for r in self.rows:
            dets = out.setdefault(r.frame, [])
            score = min(max(r.score, 0.0), 1.0)
            dets.append(Detection(r.frame, r.bbox, score, r.class_id, len(dets)))
        return out

    def trajectories(self) -> List[Trajectory]:
        """Rows grouped by identity; confidence is the mean row score."""
        by_id: Dict[int, Trajectory] = {}
        scores: Dict[int, List[float]] = {}
        for r in self.rows:
            t = by_id.setdefault(r.track_id, Trajectory(r.track_id, r.class_id, {}))
            if r.frame in t.boxes:
                raise FormatError(f"identity {r.track_id} has two boxes in frame {r.frame}")
            t.boxes[r.frame] = r.bbox
            scores.setdefault(r.track_id, []).append(r.score)
        for tid, t in by_id.items():
            t.confidence = float(np.mean(scores[tid]))
        return [by_id[k] for k in sorted(by_id)]


def _parse_rows(path, min_fields: int, visdrone: bool) -> CsvContent:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    out = CsvContent()
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) < min_fields:
                raise FormatError(f"{path}:{lineno}: expected at least {min_fields} fields, got {len(parts)}")
            try:
                frame = int(float(parts[0]))
                tid = int(float(parts[1]))
                left, top, w, h = (float(x) for x in parts[2:6])
                score = float(parts[6])
                cls = int(float(parts[7])) if len(parts) > 7 and parts[7] else 1
                vis = float(parts[8]) if len(parts) > 8 and parts[8] else 1.0
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(v) for v in (left, top, w, h, score)):
                raise FormatError(f"{path}:{lineno}: non-finite value")
            if frame < 1:
                raise FormatError(f"{path}:{lineno}: frame index must be >= 1")
            if w <= 0 or h <= 0:
                log.warning("%s:%d: skipping box with non-positive size", path, lineno)
                continue
            box = BBox.from_ltwh(left, top, w, h)
            if visdrone and cls == 0:
                out.ignore.setdefault(frame, []).append(box)
                continue
            out.rows.append(Row(frame, tid, box, score, cls, vis))
    return out


def read_mot_csv(path) -> CsvContent:
    return _parse_rows(path, 7, visdrone=False)


def read_visdrone_csv(path) -> CsvContent:
    return _parse_rows(path, 8, visdrone=True)


def read_tracks_file(path, fmt: str = "mot") -> CsvContent:
    if fmt == "mot":
        return read_mot_csv(path)
    if fmt == "visdrone":
        return read_visdrone_csv(path)
    raise ValueError(f"unknown format {fmt!r}")


@contextmanager
def atomic_write(path, mode: str = "w"):
    """Write to a temp file next to ``path`` and rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def format_result_rows(tracklets) -> str:
    rows = []
    for t in tracklets:
        for f, b, s in zip(t.frames, t.boxes, t.scores):
            rows.append((f, t.track_id, b, s, t.class_id))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = []
    for f, tid, b, s, cls in rows:
        left, top, w, h = b.to_ltwh()
        lines.append(f"{f},{tid},{_fmt(left)},{_fmt(top)},{_fmt(w)},{_fmt(h)},{_fmt(s)},{cls},-1,-1\n")
    return "".join(lines)


def write_results(tracklets, path) -> None:
    """MOT-Challenge result rows ``frame,id,left,top,w,h,conf,class,-1,-1`` sorted by (frame, id)."""
    with atomic_write(path) as fh:
        fh.write(format_result_rows(tracklets))


def write_tracks_csv(path, rows: Sequence[Row], ignore: Optional[Mapping[int, Sequence[BBox]]] = None,
                     fmt: str = "visdrone") -> None:
    """Write ground truth or detections (``track_id == -1``) in MOT or VisDrone layout."""
    out = []
    for r in rows:
        out.append((r.frame, r.track_id, r.bbox, r.score, r.class_id, r.visibility))
    for frame, boxes in (ignore or {}).items():
        for b in boxes:
            out.append((frame, -1, b, 0.0, 0, 0.0))
    out.sort(key=lambda r: (r[0], r[1] if r[1] >= 0 else 1 << 30))
    with atomic_write(path) as fh:
        for f, tid, b, s, cls, vis in out:
            left, top, w, h = b.to_ltwh()
            head = f"{f},{tid},{_fmt(left)},{_fmt(top)},{_fmt(w)},{_fmt(h)},{_fmt(s)},{cls}"
            if fmt == "visdrone":
                fh.write(f"{head},0,0\n")
            else:
                fh.write(f"{head},{_fmt(vis)}\n")


def read_flo(path) -> MotionField:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    if data[:4] != FLO_MAGIC_BYTES:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, not a .flo file")
    width, height = struct.unpack_from("<ii", data, 4)
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid size {width}x{height}")
    expected = 12 + 8 * width * height
    if len(data) != expected:
        raise FormatError(f"{path}: payload length {len(data)} bytes, expected {expected}")
    flow = np.frombuffer(data, dtype="<f4", offset=12).reshape(height, width, 2)
    return MotionField.dense(flow.astype(np.float64))


def write_flo(path, flow) -> None:
    if isinstance(flow, MotionField):
        flow = flow.flow
    arr = np.asarray(flow)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"flow must have shape (height, width, 2), got {arr.shape}")
    height, width = arr.shape[:2]
    with atomic_write(path, "wb") as fh:
        fh.write(FLO_MAGIC_BYTES)
        fh.write(struct.pack("<ii", width, height))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def flow_path(flow_dir, frame: int) -> Path:
    return Path(flow_dir) / f"{frame:06d}.flo"


def flo_provider(flow_dir) -> Callable[[int], Optional[MotionField]]:
    """Frame -> dense field from ``flow_dir``; frame 1 has no file and yields None."""

    def load(frame: int) -> Optional[MotionField]:
        if frame <= 1:
            return None
        p = flow_path(flow_dir, frame)
        if not p.exists():
            raise FileNotFoundError(f"{p}: missing flow file for frame {frame}")
        return read_flo(p)

    return load


def read_motion_csv(path) -> Dict[int, MotionField]:
    path = Path(path)
    out: Dict[int, MotionField] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("frame"):
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise FormatError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
            try:
                frame = int(parts[0])
                a, b, c, d, e, f = (float(x) for x in parts[1:])
                out[frame] = MotionField.affine(a, b, c, d, e, f)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


def write_motion_csv(path, fields_by_frame: Mapping[int, MotionField]) -> None:
    with atomic_write(path) as fh:
        fh.write("frame,a,b,c,d,e,f\n")
        for frame in sorted(fields_by_frame):
            m = fields_by_frame[frame]
            if m.kind == "constant":
                coeffs = (0.0, 0.0, m.uv[0], 0.0, 0.0, m.uv[1])
            elif m.kind == "affine":
                coeffs = m.coeffs
            else:
                raise ValueError("dense fields belong in .flo files")
            fh.write(f"{frame}," + ",".join(repr(float(c)) for c in coeffs) + "\n")


def read_embeddings(path) -> Dict[Tuple[int, int], Embedding]:
    """Embedding table keyed by ``(frame, det_index)``."""
    path = Path(path)
    out: Dict[Tuple[int, int], Embedding] = {}
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if dim is None:
                if len(parts) < 3 or not parts[2].startswith("dim="):
                    raise FormatError(f"{path}:{lineno}: expected header 'frame,det_index,dim=D'")
                try:
                    dim = int(parts[2][4:])
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: bad dimension {parts[2]!r}") from None
                continue
            if len(parts) != dim + 2:
                raise FormatError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 2}")
            try:
                key = (int(parts[0]), int(parts[1]))
                out[key] = Embedding([float(x) for x in parts[2:]])
            except (ValueError, EmbeddingError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


def write_embeddings(path, table: Mapping[Tuple[int, int], Embedding]) -> None:
    dims = {e.dim for e in table.values()}
    if len(dims) > 1:
        raise ValueError(f"mixed embedding dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 128
    with atomic_write(path) as fh:
        fh.write(f"frame,det_index,dim={dim}\n")
        for key in sorted(table):
            vals = ",".join(f"{v:.8f}" for v in table[key].values)
            fh.write(f"{key[0]},{key[1]},{vals}\n")


def attach_embeddings(dets_by_frame: Mapping[int, List[Detection]], table: Mapping) -> Dict[int, List[Detection]]:
    """Link detections to embedding rows with the same ``(frame, det_index)``."""
    known = set()
    out = {}
    for frame, dets in dets_by_frame.items():
        linked = []
        for d in dets:
            key = (frame, d.det_index)
            if key in table:
                known.add(key)
                d = replace(d, embedding_id=key)
            linked.append(d)
        out[frame] = linked
    orphans = len(set(table) - known)
    if orphans:
        log.warning("%d embedding rows have no matching detection and are ignored", orphans)
    return out


def read_kv(path) -> Dict[str, str]:
    path = Path(path)
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


@dataclass(frozen=True)
class SeqInfo:
    width: int
    height: int
    frames: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image width and height must be positive")


def read_seqinfo(path) -> SeqInfo:
    kv = {k.lower(): v for k, v in read_kv(path).items()}
    try:
        return SeqInfo(int(kv["width"]), int(kv["height"]), int(kv.get("frames", "0")))
    except KeyError as exc:
        raise FormatError(f"{path}: missing key {exc.args[0]}") from None
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_seqinfo(path, info: SeqInfo) -> None:
    with atomic_write(path) as fh:
        fh.write(f"width={info.width}\nheight={info.height}\nframes={info.frames}\n")


CONFIG_KEYS = (
    "sigma_iou1", "sigma_iou2", "sigma_app", "sigma_h", "t_min", "t_max", "sigma_nms",
    "motion_mode", "trigger_ratio", "association", "class_agnostic", "stage2_cost", "ema_alpha",
    "cascade", "use_appearance", "trigger_counts", "corner_mode",
)

_MOTION_ALIASES = {"none": "none", "flow": "always_flow", "always_flow": "always_flow",
                   "flow-fast": "flow_on_trigger", "flow_fast": "flow_on_trigger",
                   "flow_on_trigger": "flow_on_trigger"}


def motion_mode_from_flag(value: str) -> str:
    try:
        return _MOTION_ALIASES[value]
    except KeyError:
        raise ValueError(f"unknown motion mode {value!r}") from None


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def parse_config(kv: Mapping[str, str], base=None):
    """Build a :class:`~flowtrack.tracker.TrackerConfig` from string key/values."""
    from .tracker import TrackerConfig

    cfg = base or TrackerConfig()
    unknown = sorted(set(kv) - set(CONFIG_KEYS))
    if unknown:
        raise FormatError(f"unknown config keys: {', '.join(unknown)}")
    changes = {}
    mode = cfg.motion_policy.mode
    ratio = cfg.motion_policy.trigger_ratio
    try:
        for k, v in kv.items():
            if k in ("sigma_iou1", "sigma_iou2", "sigma_app", "sigma_h", "sigma_nms", "ema_alpha"):
                changes[k] = float(v)
            elif k in ("t_min", "t_max"):
                changes[k] = int(v)
            elif k in ("class_agnostic", "cascade", "use_appearance"):
                changes[k] = _bool(v)
            elif k in ("association", "stage2_cost", "trigger_counts"):
                changes[k] = v
            elif k == "motion_mode":
                mode = motion_mode_from_flag(v)
            elif k == "trigger_ratio":
                ratio = float(v)
            elif k == "corner_mode":
                if v not in ("two", "mean4"):
                    raise ValueError(f"corner_mode must be 'two' or 'mean4', got {v!r}")
                changes["mean_corners"] = v == "mean4"
        changes["motion_policy"] = MotionPolicy(mode, ratio)
        return replace(cfg, **changes)
    except ValueError as exc:
        raise FormatError(f"invalid config: {exc}") from None


def read_config(path, base=None):
    return parse_config(read_kv(path), base)


def write_config(path, cfg) -> None:
    vals = {
        "sigma_iou1": cfg.sigma_iou1, "sigma_iou2": cfg.sigma_iou2, "sigma_app": cfg.sigma_app,
        "sigma_h": cfg.sigma_h, "t_min": cfg.t_min, "t_max": cfg.t_max, "sigma_nms": cfg.sigma_nms,
        "motion_mode": cfg.motion_policy.mode, "trigger_ratio": cfg.motion_policy.trigger_ratio,
        "association": cfg.association, "class_agnostic": str(cfg.class_agnostic).lower(),
        "stage2_cost": cfg.stage2_cost, "ema_alpha": cfg.ema_alpha,
        "cascade": str(cfg.cascade).lower(), "use_appearance": str(cfg.use_appearance).lower(),
        "trigger_counts": cfg.trigger_counts, "corner_mode": "mean4" if cfg.mean_corners else "two",
    }
    with atomic_write(path) as fh:
        for k in CONFIG_KEYS:
            fh.write(f"{k} = {vals[k]}\n")


@dataclass
class SequenceBundle:
    detections: Dict[int, List[Detection]]
    info: Optional[SeqInfo] = None
    flows: Optional[Callable[[int], Optional[MotionField]]] = None
    embeddings: Optional[Dict[Tuple[int, int], Embedding]] = None
    gt: Optional[List[Trajectory]] = None
    ignore: Dict[int, List[BBox]] = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        if self.info is not None and self.info.frames:
            return self.info.frames
        last_gt = max((max(t.boxes) for t in self.gt or [] if t.boxes), default=0)
        return max(max(self.detections, default=0), last_gt)


def load_bundle(directory, fmt: str = "visdrone") -> SequenceBundle:
    d = Path(directory)
    det = read_tracks_file(d / DET_FILE, fmt)
    dets = det.detections()
    info = read_seqinfo(d / SEQINFO_FILE) if (d / SEQINFO_FILE).exists() else None
    emb = read_embeddings(d / EMB_FILE) if (d / EMB_FILE).exists() else None
    if emb is not None:
        dets = attach_embeddings(dets, emb)
    flows = None
    if (d / FLOW_DIR).is_dir():
        flows = flo_provider(d / FLOW_DIR)
    elif (d / MOTION_FILE).exists():
        flows = read_motion_csv(d / MOTION_FILE).get
    gt = ignore = None
    if (d / GT_FILE).exists():
        content = read_tracks_file(d / GT_FILE, fmt)
        gt, ignore = content.trajectories(), content.ignore
    return SequenceBundle(dets, info, flows, emb, gt, ignore or {})
