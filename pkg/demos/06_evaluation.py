"""IoU, greedy matching, and COCO-style mAP on a toy example."""

import numpy as np

from labelspace_align import average_precision, evaluate, iou
from labelspace_align.infer import Detection
from labelspace_align.space import SubspaceView
from labelspace_align.synth import SynthInstance

print(f"identical boxes:  iou = {iou((0, 0, 2, 2), (0, 0, 2, 2))}")
print(f"quarter overlap:  iou = {iou((0, 0, 2, 2), (1, 1, 3, 3)):.4f}  (1/7)")
print(f"disjoint boxes:   iou = {iou((0, 0, 1, 1), (5, 5, 6, 6))}")

# one class, two ground truths, three detections (TP, FP, TP by score order)
gts = [("img0", (0.0, 0.0, 4.0, 4.0)), ("img0", (10.0, 10.0, 14.0, 14.0))]
dets = [
    ("img0", (0.0, 0.0, 4.0, 4.0), 0.9),
    ("img0", (20.0, 20.0, 24.0, 24.0), 0.8),
    ("img0", (10.0, 10.0, 14.0, 14.0), 0.7),
]
ap = average_precision(dets, gts, iou_thresh=0.5)
print(f"\nmixed case AP@0.5 = {ap:.4f}")
print("(recall hits 1.0 only after swallowing one false positive)")

# full report over a small shard
shard = [
    SynthInstance("im0", (0, 0, 20, 20), 0, np.zeros(2, np.float32)),
    SynthInstance("im0", (40, 40, 60, 60), 1, np.zeros(2, np.float32)),
    SynthInstance("im1", (5, 5, 25, 25), 1, np.zeros(2, np.float32)),
]
view = SubspaceView(
    source="demo",
    names=("cat", "dog"),
    displays=("cat", "dog"),
    embeddings=np.eye(2, dtype=np.float32),
)
detections = [
    Detection("im0", (0, 0, 20, 20), 0, "cat", 0.95),
    Detection("im0", (40, 40, 60, 60), 1, "dog", 0.9),
    Detection("im1", (5, 5, 25, 25), 0, "cat", 0.8),  # wrong label
]
report = evaluate(detections, shard, view, dataset="demo")
print()
print(report.format_table())
print(f"\nmAP over IoU 0.50:0.05:0.95 = {report.map:.4f}")
