"""
Scoring a tracker
=================

CLEAR-MOT counts, identity F1 and tracklet AP on a hand-built example,
then the fast flow mode on a sequence whose camera moves rarely.
"""

import time

from flowtrack import BBox, Trajectory, TrackerConfig, evaluate, generate, make_scenario
from flowtrack.metrics import format_table


def track(tid, frames, x):
    return Trajectory(tid, 1, {f: BBox(x, 0, x + 10, 10) for f in frames})


# %%
# Two objects over five frames.  The prediction misses object 2 twice,
# adds one stray box and hands object 1 over to a new identity halfway.
gt = [track(1, range(1, 6), 0), track(2, range(1, 6), 50)]
pred = [track(1, [1, 2, 3], 0), track(3, [4, 5], 0), track(2, [1, 2, 3], 50), track(9, [2], 200)]
rep = evaluate(gt, pred)
print(format_table([("example", rep)]))
print("MOTA = 1 - (2 FN + 1 FP + 1 IDS) / 10 =", rep.clear.mota)

# %%
# Flow on demand: the camera moves on 10 of 100 frames.  The fast mode
# runs a plain IoU pass first and only reads a flow file when many tracks
# fail to match.  Reading dense .flo files is what the saving is about.
import tempfile

from flowtrack import run_sequence
from flowtrack.io import flo_provider
from flowtrack.metrics import tracklets_to_trajectories

seq = generate(make_scenario("pan", seed=1, frames=100, pan_period=10))
with tempfile.TemporaryDirectory() as tmp:
    seq.write(tmp)
    flows = flo_provider(f"{tmp}/flow")
    for mode in ("always_flow", "flow_on_trigger"):
        cfg = TrackerConfig().with_motion(mode)
        t0 = time.perf_counter()
        out, state = run_sequence(seq.detections, flows, seq.embeddings, cfg, n_frames=100, return_state=True)
        dt = time.perf_counter() - t0
        r = evaluate(seq.gt, tracklets_to_trajectories(out), metrics=("clear",)).clear
        print(f"{mode:16s} flow read on {len(state.flow_frames):3d} frames, MOTA {r.mota:.3f}, {dt * 1e3:.0f} ms")
