"""Detection evaluation: IoU, greedy matching, AP, and accuracy.

Average precision follows the standard 101-point interpolation: per
class and IoU threshold, detections are matched greedily in score order
(each ground truth used at most once, ties on IoU broken toward the
earlier ground-truth index), the precision curve is made monotone from
the right, and precision is sampled at recalls 0.00, 0.01, ..., 1.00.
The headline number averages per-class AP over classes with at least
one ground truth, then over IoU thresholds 0.50:0.05:0.95 (single-
threshold 0.5 mode available as a flag).

Classification accuracy asks a simpler question: for each foreground
ground-truth box, does its best-overlapping detection (IoU >= 0.5)
carry the right label?
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LabelSpaceMismatchError, MalformedBoxError
from .infer import Detection
from .space import SubspaceView
from .synth import SynthInstance

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
ACCURACY_IOU = 0.5

Box = tuple[float, float, float, float]


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    if not (ax1 < ax2 and ay1 < ay2):
        raise MalformedBoxError(f"malformed box {a}")
    if not (bx1 < bx2 and by1 < by2):
        raise MalformedBoxError(f"malformed box {b}")
    ix = min(ax2, bx2) - max(ax1, bx1)
    iy = min(ay2, by2) - max(ay1, by1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def _canonical_det_order(dets):
    """Descending score; ties by image id then box coordinates."""
    return sorted(dets, key=lambda d: (-d[2], d[0], d[1]))


def match_greedy(
    dets: Sequence[tuple[str, Box, float]],
    gts: Sequence[tuple[str, Box]],
    iou_thresh: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy per-class matching.

    Returns (tp flags per detection in canonical order, matched flags
    per ground truth). Each detection takes the highest-IoU unmatched
    ground truth in its image at or above the threshold; equal IoU goes
    to the earlier ground-truth index.
    """
    order = _canonical_det_order(dets)
    by_image: dict = {}
    for gi, (img, box) in enumerate(gts):
        by_image.setdefault(img, []).append(gi)
    matched = np.zeros(len(gts), dtype=bool)
    tp = np.zeros(len(order), dtype=bool)
    for di, (img, dbox, _score) in enumerate(order):
        best_iou = -1.0
        best_gi = -1
        for gi in by_image.get(img, ()):
            if matched[gi]:
                continue
            ov = iou(dbox, gts[gi][1])
            # strict > keeps the earlier ground-truth index on equal IoU
            if ov >= iou_thresh and ov > best_iou:
                best_iou = ov
                best_gi = gi
        if best_gi >= 0:
            matched[best_gi] = True
            tp[di] = True
    return tp, matched


def average_precision(
    dets: Sequence[tuple[str, Box, float]],
    gts: Sequence[tuple[str, Box]],
    iou_thresh: float,
) -> float | None:
    """101-point interpolated AP for one class at one IoU threshold.

    Returns None when the class has no ground truth (excluded from the
    class mean); 0.0 when it has ground truth but no detections.
    """
    if len(gts) == 0:
        return None
    if len(dets) == 0:
        return 0.0
    tp, _ = match_greedy(dets, gts, iou_thresh)
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(~tp)
    recall = tp_cum / len(gts)
    precision = tp_cum / (tp_cum + fp_cum)
    # Monotone envelope from the right, then sample at the recall grid.
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(np.mean(sampled))


@dataclass(frozen=True, eq=False)
class EvalReport:
    dataset: str
    thresholds: tuple[float, ...]
    per_class_ap: dict  # label_id -> list of AP per threshold, or None if no gt
    map_per_threshold: tuple[float, ...]
    map: float
    accuracy: float
    counts: dict  # threshold -> {"tp": int, "fp": int, "fn": int}
    config: dict

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "thresholds": list(self.thresholds),
            "per_class_ap": self.per_class_ap,
            "map_per_threshold": list(self.map_per_threshold),
            "map": self.map,
            "accuracy": self.accuracy,
            "counts": {str(t): c for t, c in self.counts.items()},
            "config": self.config,
        }

    def format_table(self) -> str:
        lines = [f"dataset: {self.dataset}"]
        width = max([len("class")] + [len(k) for k in self.per_class_ap])
        lines.append(f"{'class'.ljust(width)}  {'AP@0.50':>8}  {'AP@mean':>8}")
        for label, aps in sorted(self.per_class_ap.items()):
            if aps is None:
                lines.append(f"{label.ljust(width)}  {'--':>8}  {'--':>8}")
            else:
                lines.append(
                    f"{label.ljust(width)}  {aps[0]:>8.4f}  {float(np.mean(aps)):>8.4f}"
                )
        lines.append(f"{'mAP'.ljust(width)}  {self.map:>8.4f}")
        lines.append(f"{'accuracy'.ljust(width)}  {self.accuracy:>8.4f}")
        return "\n".join(lines)


def evaluate(
    detections: Sequence[Detection],
    shard: Sequence[SynthInstance],
    target: SubspaceView,
    thresholds: Sequence[float] = IOU_THRESHOLDS,
    *,
    map50_only: bool = False,
    dataset: str = "",
    config: dict | None = None,
) -> EvalReport:
    """Score detections against a shard's foreground ground truth."""
    if map50_only:
        thresholds = (0.5,)
    thresholds = tuple(thresholds)
    m = len(target)
    for det in detections:
        if not (0 <= det.label < m):
            raise LabelSpaceMismatchError(
                f"detection label index {det.label} outside target space of size {m}"
            )

    gts_by_class: dict[int, list[tuple[str, Box]]] = {c: [] for c in range(m)}
    for inst in shard:
        if inst.local_label is None:
            continue
        if not (0 <= inst.local_label < m):
            raise LabelSpaceMismatchError(
                f"ground-truth label {inst.local_label} outside target space of size {m}"
            )
        gts_by_class[inst.local_label].append((inst.image_id, inst.box))
    dets_by_class: dict[int, list[tuple[str, Box, float]]] = {c: [] for c in range(m)}
    for det in detections:
        dets_by_class[det.label].append((det.image_id, det.box, det.score))

    per_class_ap: dict = {}
    map_per_threshold = []
    counts: dict = {}
    for t in thresholds:
        counts[t] = {"tp": 0, "fp": 0, "fn": 0}
    for c in range(m):
        label_id = target.names[c]
        if len(gts_by_class[c]) == 0:
            per_class_ap[label_id] = None
            continue
        per_class_ap[label_id] = [
            average_precision(dets_by_class[c], gts_by_class[c], t) for t in thresholds
        ]
    for ti, t in enumerate(thresholds):
        class_aps = [aps[ti] for aps in per_class_ap.values() if aps is not None]
        map_per_threshold.append(float(np.mean(class_aps)) if class_aps else 0.0)
        for c in range(m):
            if len(gts_by_class[c]) == 0 and len(dets_by_class[c]) == 0:
                continue
            tp, matched = match_greedy(dets_by_class[c], gts_by_class[c], t)
            counts[t]["tp"] += int(tp.sum())
            counts[t]["fp"] += int((~tp).sum())
            counts[t]["fn"] += int((~matched).sum())

    accuracy = _classification_accuracy(detections, shard)
    return EvalReport(
        dataset=dataset,
        thresholds=thresholds,
        per_class_ap=per_class_ap,
        map_per_threshold=tuple(map_per_threshold),
        map=float(np.mean(map_per_threshold)) if map_per_threshold else 0.0,
        accuracy=accuracy,
        counts=counts,
        config=dict(config or {}),
    )


def _classification_accuracy(
    detections: Sequence[Detection], shard: Sequence[SynthInstance]
) -> float:
    """Fraction of foreground ground-truth boxes whose best-overlapping
    detection (IoU >= 0.5, any class) carries the correct label."""
    dets_by_image: dict = {}
    for det in detections:
        dets_by_image.setdefault(det.image_id, []).append(det)
    total = 0
    correct = 0
    for inst in shard:
        if inst.local_label is None:
            continue
        total += 1
        best_det = None
        best_ov = 0.0
        for det in dets_by_image.get(inst.image_id, ()):
            ov = iou(det.box, inst.box)
            if ov > best_ov:
                best_ov = ov
                best_det = det
        if best_ov >= ACCURACY_IOU and best_det.label == inst.local_label:
            correct += 1
    return correct / total if total else float("nan")
