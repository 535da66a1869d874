"""
Tracks and sub-sequences
========================

Detections are linked frame to frame by minimum-cost assignment on 1 - IoU.
A new sub-sequence starts wherever the set of live track IDs changes.
"""
from focusmap import BBox, Detection, build_tracks, hungarian, segment

# cost matrix from the assignment docs
cost = [[4, 1, 3], [2, 0, 5], [3, 2, 2]]
print("assignment:", hungarian(cost))

def car(x):
    return Detection("car", 0.9, BBox(x, 10, x + 8, 18))

def walker(y):
    return Detection("person", 0.8, BBox(40, y, 44, y + 10))

# a car throughout, a pedestrian from frame 3 to 6, the car lost at frame 8
frames = []
for t in range(10):
    dets = [car(2 + 2 * t)] if t != 8 else []
    if 3 <= t <= 6:
        dets.append(walker(2 + t))
    frames.append(dets)

tracks = build_tracks(frames, iou_gate=0.1)
for tr in tracks:
    print(f"track {tr.id} ({tr.label}): frames {tr.start}-{tr.end}")

# the gap at frame 8 closes the car's track; frame 9 opens a new one
for sub in segment(tracks, len(frames)):
    print(f"[{sub.start}, {sub.end}] active={list(sub.active_ids)}")
