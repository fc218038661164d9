"""Test-time scoring against any label space.

Swapping the label space never touches the model: scoring against a
subspace selects exactly the corresponding columns of the full-space
score vector, and an external label set simply supplies fresh embedding
rows (zero-shot). Scores are one-vs-all sigmoids of temperature-scaled
cosines -- no softmax -- so rankings equal raw-cosine rankings for any
positive temperature. Argmax ties break toward the lowest index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import formats
from .errors import (
    DimMismatchError,
    EmptyLabelSpaceError,
    LabelSpaceMismatchError,
    NonFiniteEntryError,
)
from .space import SubspaceView
from .synth import SynthInstance
from .train import ToyModel


@dataclass(frozen=True, eq=False)
class Detection:
    """One scored proposal: the winning label in the target space."""

    image_id: str
    box: tuple[float, float, float, float]
    label: int  # index within the target label space
    label_id: str
    score: float


def predict(
    model: ToyModel,
    raw_feature: np.ndarray,
    target: SubspaceView,
    tau: float | None = None,
) -> tuple[np.ndarray, int]:
    """Score one raw feature against every target label.

    Returns (scores, argmax) with scores[j] = sigmoid(cos(v, t_j) / tau)
    where v is the projected feature.
    """
    if len(target) == 0:
        raise EmptyLabelSpaceError("target label space is empty")
    if target.dim != model.dim:
        raise DimMismatchError(
            f"target embeddings have dim {target.dim}, model projects to {model.dim}"
        )
    raw = np.asarray(raw_feature, dtype=np.float64)
    if raw.shape != (model.raw_dim,):
        raise DimMismatchError(
            f"raw feature of shape {raw.shape}, model expects ({model.raw_dim},)"
        )
    if not np.all(np.isfinite(raw)):
        raise NonFiniteEntryError("raw feature contains NaN or Inf")
    if tau is None:
        tau = model.cfg.tau
    v = model.project(raw)
    emb = target.embeddings.astype(np.float64)
    cos = emb @ v / (np.linalg.norm(emb, axis=1) * np.linalg.norm(v))
    cos = np.clip(cos, -1.0, 1.0)
    scores = 1.0 / (1.0 + np.exp(-cos / tau))
    # argmax on raw cosines: identical by monotonicity, but immune to
    # sigmoid saturation collapsing leaders at small temperatures
    return scores, int(np.argmax(cos))


def predict_batch(
    model: ToyModel,
    shard: Sequence[SynthInstance],
    target: SubspaceView,
    tau: float | None = None,
    score_threshold: float = 0.0,
) -> list[Detection]:
    """One detection per proposal whose winning score clears the threshold.

    Proposals are scored in shard order (the canonical ordering).
    """
    detections: list[Detection] = []
    for inst in shard:
        scores, arg = predict(model, inst.raw_feature, target, tau)
        s = float(scores[arg])
        if s >= score_threshold:
            detections.append(
                Detection(
                    image_id=inst.image_id,
                    box=inst.box,
                    label=arg,
                    label_id=target.names[arg],
                    score=s,
                )
            )
    return detections


def write_detections(path: Path | str, detections: Sequence[Detection]) -> None:
    """Newline-delimited JSON: image_id, box, label_id, score."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        formats.canonical_json(
            {
                "image_id": d.image_id,
                "box": [float(v) for v in d.box],
                "label_id": d.label_id,
                "score": d.score,
            }
        )
        for d in detections
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_detections(path: Path | str, target: SubspaceView) -> list[Detection]:
    """Load detections, mapping label ids back to target-space indices."""
    index = {name: i for i, name in enumerate(target.names)}
    detections = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec["label_id"] not in index:
            raise LabelSpaceMismatchError(
                f"label {rec['label_id']!r} not in target space {target.source!r}"
            )
        detections.append(
            Detection(
                image_id=rec["image_id"],
                box=tuple(rec["box"]),
                label=index[rec["label_id"]],
                label_id=rec["label_id"],
                score=float(rec["score"]),
            )
        )
    return detections
