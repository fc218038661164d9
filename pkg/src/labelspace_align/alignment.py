"""Visual-language alignment losses and their analytic gradients.

A region's visual feature is scored against every label embedding by
cosine similarity. Two losses act on that score vector:

* hard assignment: one-vs-all sigmoid binary cross-entropy after
  temperature scaling, pulling the feature toward its ground-truth
  label and away from all others, averaged over classes;
* soft assignment: mean squared error between the score vector and the
  ground-truth label's semantic-similarity row, a regularizer that
  relates the feature to every semantically close label.

The combined loss is ``hard + soft_weight * soft``. When
``soft_weight`` is 0 the soft term is skipped entirely, so a zero-weight
run is bit-for-bit identical to a hard-only run. Background regions
(no ground-truth label) use an all-zero hard target and contribute no
soft loss.

All computation is in float64; gradients with respect to both the score
vector and the visual feature are returned analytically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatchError,
    IndexOutOfRangeError,
    NonFiniteEntryError,
    ZeroVectorError,
)


@dataclass(frozen=True)
class LossConfig:
    """Loss hyperparameters; reduction is always mean-over-classes."""

    tau: float = 0.07  # temperature dividing cosines before the sigmoid
    soft_weight: float = 10.0  # balance between hard and soft terms
    bce_clamp: float = 1e-7  # probability clamp before the logs

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.soft_weight < 0:
            raise ValueError(f"soft_weight must be >= 0, got {self.soft_weight}")
        if not (0.0 < self.bce_clamp < 0.5):
            raise ValueError(f"bce_clamp must lie in (0, 0.5), got {self.bce_clamp}")

    def to_dict(self) -> dict:
        return {"tau": self.tau, "soft_weight": self.soft_weight, "bce_clamp": self.bce_clamp}

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)


@dataclass(frozen=True)
class HardTarget:
    """Ground-truth label as a one-hot target; None means background."""

    positive_index: int | None = None

    @property
    def is_background(self) -> bool:
        return self.positive_index is None


@dataclass(frozen=True)
class AlignmentScores:
    """Cosines between one region feature and all label embeddings."""

    c: np.ndarray  # (n,) float64, entries in [-1, 1]
    v_norm: float
    n: int
    dim: int


@dataclass(frozen=True)
class LossValue:
    hard: float
    soft: float
    total: float
    grad_c: np.ndarray  # (n,) d total / d c
    grad_v: np.ndarray  # (dim,) d total / d v


def score(v: np.ndarray, emb: np.ndarray) -> AlignmentScores:
    """Cosine similarities between a feature vector and every embedding row."""
    v = np.asarray(v, dtype=np.float64)
    emb = np.asarray(emb)
    if v.ndim != 1 or emb.ndim != 2 or v.shape[0] != emb.shape[1]:
        raise DimMismatchError(
            f"feature of length {v.shape} vs embeddings of shape {emb.shape}"
        )
    if not np.all(np.isfinite(v)):
        raise NonFiniteEntryError("feature contains NaN or Inf")
    v_norm = float(np.linalg.norm(v))
    if v_norm == 0.0:
        raise ZeroVectorError("cannot score a zero feature vector")
    work = emb.astype(np.float64)
    row_norms = np.linalg.norm(work, axis=1)
    if np.any(row_norms == 0.0):
        raise ZeroVectorError("an embedding row has zero norm")
    c = np.clip(work @ v / (row_norms * v_norm), -1.0, 1.0)
    return AlignmentScores(c=c, v_norm=v_norm, n=emb.shape[0], dim=emb.shape[1])


def _one_hot(n: int, target: HardTarget) -> np.ndarray:
    y = np.zeros(n, dtype=np.float64)
    if target.positive_index is not None:
        if not 0 <= target.positive_index < n:
            raise IndexOutOfRangeError(
                f"positive index {target.positive_index} outside [0, {n})"
            )
        y[target.positive_index] = 1.0
    return y


def hard_loss(
    scores: AlignmentScores, target: HardTarget, cfg: LossConfig
) -> tuple[float, np.ndarray]:
    """One-vs-all sigmoid BCE over temperature-scaled cosines.

    Probabilities are clamped to [bce_clamp, 1 - bce_clamp] before the
    logs; in the clamped region the loss is locally constant, so the
    gradient there is zero.
    """
    y = _one_hot(scores.n, target)
    logits = scores.c / cfg.tau
    p_raw = 1.0 / (1.0 + np.exp(-logits))
    p = np.clip(p_raw, cfg.bce_clamp, 1.0 - cfg.bce_clamp)
    n = scores.n
    loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
    unclamped = (p_raw > cfg.bce_clamp) & (p_raw < 1.0 - cfg.bce_clamp)
    grad_c = np.where(unclamped, (p - y) / (n * cfg.tau), 0.0)
    return loss, grad_c


def soft_loss(
    scores: AlignmentScores, s_row: np.ndarray | None, cfg: LossConfig
) -> tuple[float, np.ndarray]:
    """MSE between the cosine vector and a similarity-matrix row.

    ``s_row`` is None for background regions, which contribute zero loss
    and zero gradient.
    """
    if s_row is None:
        return 0.0, np.zeros(scores.n, dtype=np.float64)
    s = np.asarray(s_row, dtype=np.float64)
    if s.shape != (scores.n,):
        raise DimMismatchError(f"similarity row of shape {s.shape}, expected ({scores.n},)")
    diff = scores.c - s
    loss = float(np.mean(diff * diff))
    grad_c = 2.0 * diff / scores.n
    return loss, grad_c


def language_loss(
    v: np.ndarray,
    emb: np.ndarray,
    target: HardTarget,
    s_row: np.ndarray | None,
    cfg: LossConfig,
) -> LossValue:
    """Combined loss ``hard + soft_weight * soft`` with gradients.

    ``grad_v`` chains the cosine Jacobian: with u_j the unit embedding
    rows and w = v / |v|, d cos_j / d v = (u_j - cos_j * w) / |v|.
    A zero ``soft_weight`` skips the soft term entirely, making the
    total equal the hard loss bit-for-bit.
    """
    scores = score(v, emb)
    hard, grad_hard = hard_loss(scores, target, cfg)
    if cfg.soft_weight != 0.0 and not target.is_background:
        soft, grad_soft = soft_loss(scores, s_row, cfg)
        total = hard + cfg.soft_weight * soft
        grad_c = grad_hard + cfg.soft_weight * grad_soft
    else:
        soft = 0.0
        total = hard
        grad_c = grad_hard

    v64 = np.asarray(v, dtype=np.float64)
    work = np.asarray(emb, dtype=np.float64)
    unit = work / np.linalg.norm(work, axis=1)[:, None]
    w = v64 / scores.v_norm
    grad_v = (unit.T @ grad_c - float(grad_c @ scores.c) * w) / scores.v_norm
    return LossValue(hard=hard, soft=soft, total=total, grad_c=grad_c, grad_v=grad_v)
