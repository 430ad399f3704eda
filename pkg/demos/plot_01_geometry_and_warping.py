"""
Boxes, overlap and motion compensation
======================================

How a track box is carried from one frame to the next by a motion field
before it is compared with the new detections.
"""

import numpy as np

from flowtrack import BBox, MotionField, iou, sample, warp_bbox

# %%
# Two boxes sharing half their width overlap with IoU 1/3: 50 shared
# pixels over a union of 150.
a = BBox(0, 0, 10, 10)
b = BBox(5, 0, 15, 10)
print("IoU", iou(a, b))

# %%
# A camera pan moves every static object by the same amount.  Without
# compensation the old box no longer overlaps the new detection.
pan = MotionField.constant(26.0, 0.0)
track_box = BBox(100, 80, 124, 104)
detection = track_box.translate(26, 0)
print("IoU before warping", iou(track_box, detection))
print("IoU after warping ", iou(warp_bbox(track_box, pan), detection))

# %%
# Each corner moves by the flow sampled at that corner, so a field that
# grows with x stretches the box: u = 0.1 x moves (10, 10) by 1 and
# (20, 20) by 2.
stretch = MotionField.affine(0.1, 0, 0, 0, 0, 0)
print(warp_bbox(BBox(10, 10, 20, 20), stretch))

# %%
# Dense fields (as read from .flo files) are interpolated bilinearly.
flow = np.zeros((2, 2, 2))
flow[:, 1, 0] = 2.0
print("u halfway between columns:", sample(MotionField.dense(flow), 0.5, 0.0))
