"""Flow-compensated multi-object tracking and MOT evaluation.

Tracking-by-detection built on an IoU tracker: boxes are carried between
frames by a motion field, associated in a cascade (strict IoU, then IoU
plus appearance), and coasted through missed detections.  Also provides
CLEAR-MOT / IDF1 / tracklet-AP evaluation, the MOT, VisDrone and ``.flo``
file formats, and a synthetic scenario generator.
"""

from .appearance import Embedding, TrackAppearance, cosine_distance, update_track_appearance
from .association import (
    INFEASIBLE,
    Assignment,
    CostMatrix,
    build_iou_cost,
    build_stage2_cost,
    greedy_iou_match,
    hungarian_solve,
)
from .geometry import BBox, Detection, class_agnostic_nms, iou, iou_matrix
from .metrics import (
    EvalReport,
    Trajectory,
    evaluate,
    evaluate_clear,
    evaluate_idf1,
    evaluate_track_ap,
    tracklets_to_trajectories,
)
from .motion import MotionField, MotionPolicy, identity_field, sample, should_run_flow, warp_bbox
from .synth import ScenarioSpec, generate, make_scenario, run_ablation
from .tracker import Track, TrackerConfig, Tracklet, TrackSet, finalize, run_sequence, step

__version__ = "0.1.0"
