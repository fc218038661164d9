"""Projection-head training over a unified label space.

The model is a linear head ``v = W x + b`` mapping raw region features
into the text-embedding space; the text side stays frozen (the label
embeddings ARE the classifier weights). Each step samples a minibatch
of regions across all datasets at once, weighted by repeat factors so
images holding rare classes are oversampled, evaluates the alignment
loss per region, and backpropagates the feature gradient into (W, b).

Training is single-threaded and deterministic: a fixed seed fixes the
sampled indices, hence the parameter trajectory, bit for bit. A
non-finite loss aborts immediately rather than being clipped away.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import formats
from .alignment import HardTarget, LossConfig, language_loss
from .errors import (
    ChecksumMismatchError,
    EmptyCorpusError,
    LabelSpaceMismatchError,
    NonFiniteLossError,
)
from .similarity import SimilarityMatrix
from .space import UnifiedLabelSpace, subspace

CKPT_META = "ckpt.json"
CKPT_BIN = "ckpt.bin"


@dataclass(frozen=True, eq=False)
class ToyModel:
    """Linear projection head, tied to the space it was trained against."""

    W: np.ndarray  # (dim, raw_dim) float32
    b: np.ndarray  # (dim,) float32
    cfg: LossConfig
    space_checksum: str = ""

    def __post_init__(self):
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise NonFiniteLossError("model parameters must be finite")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent shapes W{self.W.shape} b{self.b.shape}")

    @property
    def dim(self) -> int:
        return int(self.W.shape[0])

    @property
    def raw_dim(self) -> int:
        return int(self.W.shape[1])

    def project(self, raw: np.ndarray) -> np.ndarray:
        """Map raw features (..., raw_dim) into embedding space, in float64."""
        raw64 = np.asarray(raw, dtype=np.float64)
        return raw64 @ self.W.astype(np.float64).T + self.b.astype(np.float64)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    batch_size: int = 32
    learning_rate: float = 0.01
    optimizer: str = "adam"  # "sgd" | "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rfs_threshold: float = 0.001
    seed: int = 0
    checkpoint_every: int = 0  # 0 = no intermediate checkpoints

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0.0 < self.rfs_threshold <= 1.0):
            raise ValueError("rfs_threshold must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "rfs_threshold": self.rfs_threshold,
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class TrainReport:
    hard: np.ndarray  # (steps,) batch-mean hard loss
    soft: np.ndarray  # (steps,)
    total: np.ndarray  # (steps,)
    per_dataset_accuracy: dict
    wall_clock: float
    config: dict


def init_model(
    space: UnifiedLabelSpace, raw_dim: int, cfg: LossConfig, seed: int = 0
) -> ToyModel:
    """Fresh head: W uniform in +-1/sqrt(raw_dim), b zero."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(raw_dim)
    w = rng.uniform(-bound, bound, size=(space.dim, raw_dim)).astype(np.float32)
    return ToyModel(
        W=w,
        b=np.zeros(space.dim, dtype=np.float32),
        cfg=cfg,
        space_checksum=space.checksum,
    )


def repeat_factors(per_image_classes: Sequence[Iterable[int]], t: float) -> np.ndarray:
    """Per-image sampling weights from category frequency.

    A category appearing in fraction f of images gets factor
    max(1, sqrt(t / f)); an image takes the max factor over its
    categories (1.0 when it has none).
    """
    if not (0.0 < t <= 1.0):
        raise ValueError("threshold t must lie in (0, 1]")
    n_images = len(per_image_classes)
    if n_images == 0:
        raise EmptyCorpusError("no images")
    counts: dict = {}
    as_sets = [frozenset(classes) for classes in per_image_classes]
    for classes in as_sets:
        for c in classes:
            counts[c] = counts.get(c, 0) + 1
    factor = {
        c: max(1.0, float(np.sqrt(t / (k / n_images)))) for c, k in counts.items()
    }
    return np.array(
        [max((factor[c] for c in classes), default=1.0) for classes in as_sets],
        dtype=np.float64,
    )


def _flatten_corpus(space: UnifiedLabelSpace, shards: dict):
    raws, glabels, image_keys = [], [], []
    for name, instances in shards.items():
        if name not in space.dataset_names:
            raise LabelSpaceMismatchError(f"shard dataset {name!r} not in unified space")
        off = space.offset(name)
        count = space.count(name)
        for inst in instances:
            if inst.local_label is None:
                glabels.append(-1)
            else:
                if not (0 <= inst.local_label < count):
                    raise LabelSpaceMismatchError(
                        f"{name!r}: local label {inst.local_label} outside its label set"
                    )
                glabels.append(off + inst.local_label)
            raws.append(np.asarray(inst.raw_feature, dtype=np.float64))
            image_keys.append((name, inst.image_id))
    if not raws:
        raise EmptyCorpusError("no training instances")
    return np.asarray(raws), np.asarray(glabels), image_keys


def _sampling_probs(glabels: np.ndarray, image_keys: list, t: float) -> np.ndarray:
    """Instance-level probabilities proportional to each image's repeat factor."""
    images: dict = {}
    for key, g in zip(image_keys, glabels):
        classes = images.setdefault(key, set())
        if g >= 0:
            classes.add(int(g))
    keys = list(images.keys())
    weights = repeat_factors([images[k] for k in keys], t)
    by_image = dict(zip(keys, weights))
    p = np.array([by_image[k] for k in image_keys], dtype=np.float64)
    return p / p.sum()


def sgd_step(param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    return param - lr * grad


class AdamState:
    """Standard Adam with bias correction, kept in float64."""

    def __init__(self, shape, beta1: float, beta2: float, eps: float):
        self.m = np.zeros(shape, dtype=np.float64)
        self.v = np.zeros(shape, dtype=np.float64)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return param - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(
    model: ToyModel,
    space: UnifiedLabelSpace,
    sim: SimilarityMatrix,
    shards: dict,
    cfg: TrainConfig,
    *,
    log_path: Path | str | None = None,
    checkpoint_dir: Path | str | None = None,
) -> tuple[ToyModel, TrainReport]:
    """Run the multi-dataset training loop; see the module docstring."""
    space_sum = space.checksum
    if sim.source_checksum is not None and sim.source_checksum != space_sum:
        raise ChecksumMismatchError(
            "similarity matrix was built from a different label space"
        )
    if sim.n != space.n:
        raise ChecksumMismatchError(
            f"similarity matrix is {sim.n}x{sim.n}, space has {space.n} labels"
        )
    raws, glabels, image_keys = _flatten_corpus(space, shards)
    probs = _sampling_probs(glabels, image_keys, cfg.rfs_threshold)
    emb = space.embeddings
    sim64 = sim.data.astype(np.float64)

    w = model.W.astype(np.float64)
    b = model.b.astype(np.float64)
    opt_w = opt_b = None
    if cfg.optimizer == "adam":
        opt_w = AdamState(w.shape, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        opt_b = AdamState(b.shape, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    rng = np.random.default_rng(cfg.seed)
    n_inst = raws.shape[0]
    hard_trace = np.zeros(cfg.steps)
    soft_trace = np.zeros(cfg.steps)
    total_trace = np.zeros(cfg.steps)
    log_lines: list[str] = []
    started = time.perf_counter()

    for step in range(cfg.steps):
        batch = rng.choice(n_inst, size=cfg.batch_size, p=probs, replace=True)
        g_w = np.zeros_like(w)
        g_b = np.zeros_like(b)
        h_sum = s_sum = t_sum = 0.0
        for idx in batch:
            x = raws[idx]
            v = w @ x + b
            g = int(glabels[idx])
            if g >= 0:
                target = HardTarget(positive_index=g)
                s_row = sim64[g]
            else:
                target = HardTarget(positive_index=None)
                s_row = None
            loss = language_loss(v, emb, target, s_row, model.cfg)
            h_sum += loss.hard
            s_sum += loss.soft
            t_sum += loss.total
            g_w += np.outer(loss.grad_v, x)
            g_b += loss.grad_v
        inv = 1.0 / cfg.batch_size
        g_w *= inv
        g_b *= inv
        hard_trace[step] = h_sum * inv
        soft_trace[step] = s_sum * inv
        total_trace[step] = t_sum * inv
        if not np.isfinite(total_trace[step]):
            raise NonFiniteLossError(
                f"non-finite loss at step {step}: hard={hard_trace[step]} "
                f"soft={soft_trace[step]}"
            )
        if cfg.optimizer == "sgd":
            w = sgd_step(w, g_w, cfg.learning_rate)
            b = sgd_step(b, g_b, cfg.learning_rate)
        else:
            w = opt_w.step(w, g_w, cfg.learning_rate)
            b = opt_b.step(b, g_b, cfg.learning_rate)
        if log_path is not None:
            log_lines.append(
                formats.canonical_json(
                    {
                        "step": step,
                        "hard": hard_trace[step],
                        "soft": soft_trace[step],
                        "total": total_trace[step],
                        "lr": cfg.learning_rate,
                    }
                )
            )
        if (
            checkpoint_dir is not None
            and cfg.checkpoint_every > 0
            and (step + 1) % cfg.checkpoint_every == 0
            and (step + 1) < cfg.steps
        ):
            snap = ToyModel(
                W=w.astype(np.float32),
                b=b.astype(np.float32),
                cfg=model.cfg,
                space_checksum=space_sum,
            )
            save_checkpoint(snap, Path(checkpoint_dir) / f"step-{step + 1:06d}")

    final = ToyModel(
        W=w.astype(np.float32),
        b=b.astype(np.float32),
        cfg=model.cfg,
        space_checksum=space_sum,
    )
    if checkpoint_dir is not None:
        moments = None
        if cfg.optimizer == "adam":
            moments = {
                "adam_m_W": opt_w.m,
                "adam_v_W": opt_w.v,
                "adam_m_b": opt_b.m,
                "adam_v_b": opt_b.v,
            }
        save_checkpoint(final, Path(checkpoint_dir) / "final", optimizer_state=moments)
    accuracy = {
        name: training_accuracy(final, space, name, shards[name]) for name in shards
    }
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        Path(log_path).write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    report = TrainReport(
        hard=hard_trace,
        soft=soft_trace,
        total=total_trace,
        per_dataset_accuracy=accuracy,
        wall_clock=time.perf_counter() - started,
        config=cfg.to_dict(),
    )
    return final, report


def training_accuracy(
    model: ToyModel, space: UnifiedLabelSpace, dataset: str, instances
) -> float:
    """Fraction of foreground instances whose projected feature lands
    closest (by cosine) to the right label inside the dataset's subspace."""
    view = subspace(space, dataset)
    emb = view.embeddings.astype(np.float64)
    emb_unit = emb / np.linalg.norm(emb, axis=1)[:, None]
    fg = [inst for inst in instances if inst.local_label is not None]
    if not fg:
        return float("nan")
    feats = model.project(np.asarray([inst.raw_feature for inst in fg], dtype=np.float64))
    feats_unit = feats / np.linalg.norm(feats, axis=1)[:, None]
    pred = np.argmax(feats_unit @ emb_unit.T, axis=1)
    truth = np.array([inst.local_label for inst in fg])
    return float(np.mean(pred == truth))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    model: ToyModel,
    path: Path | str,
    *,
    optimizer_state: dict | None = None,
) -> None:
    """Write ``ckpt.json`` (metadata) + ``ckpt.bin``: a flat LSEB payload
    of W rows, then b, then any optimizer moments (layout recorded in the
    metadata)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    segments: list[tuple[str, np.ndarray]] = [("W", model.W), ("b", model.b)]
    for name, arr in (optimizer_state or {}).items():
        segments.append((name, np.asarray(arr)))
    flat = np.concatenate([seg.ravel() for _, seg in segments]).astype(np.float32)
    formats.write_matrix(path / CKPT_BIN, flat[:, None])
    meta = {
        "dim": model.dim,
        "raw_dim": model.raw_dim,
        "loss_cfg": model.cfg.to_dict(),
        "space_checksum": model.space_checksum,
        "payload": [[name, list(seg.shape)] for name, seg in segments],
    }
    formats.write_json(path / CKPT_META, meta)


def load_checkpoint(
    path: Path | str,
    *,
    space_checksum: str | None = None,
    override: bool = False,
) -> ToyModel:
    """Load a checkpoint; refuse a differing label-space checksum unless
    ``override`` is set (the label-swap path for transfer evaluation)."""
    path = Path(path)
    meta = formats.read_json(path / CKPT_META)
    flat = formats.read_matrix(path / CKPT_BIN).ravel()
    dim, raw_dim = int(meta["dim"]), int(meta["raw_dim"])
    declared = sum(int(np.prod(shape)) for _, shape in meta["payload"])
    if flat.shape[0] != declared or declared < dim * raw_dim + dim:
        raise ChecksumMismatchError(
            f"checkpoint payload has {flat.shape[0]} floats, metadata implies {declared}"
        )
    stored = meta["space_checksum"]
    if space_checksum is not None and space_checksum != stored and not override:
        raise ChecksumMismatchError(
            "checkpoint was trained against a different label space "
            "(pass override to swap label spaces deliberately)"
        )
    return ToyModel(
        W=flat[: dim * raw_dim].reshape(dim, raw_dim),
        b=flat[dim * raw_dim : dim * raw_dim + dim],
        cfg=LossConfig.from_dict(meta["loss_cfg"]),
        space_checksum=stored,
    )
