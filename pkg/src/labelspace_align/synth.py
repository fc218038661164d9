"""Reproducible synthetic multi-dataset detection corpora.

Each corpus is built from a pool of unit-norm concept prototypes. A
dataset labels a subset of concepts (subsets may overlap across
datasets, so the same concept appears under several datasets' label
sets), jitters the prototype to get its text embeddings, and pushes
instance features through its own well-conditioned domain transform to
simulate domain shift. Boxes live on a jittered grid with one box per
grid cell, so same-image boxes never overlap and greedy matching at
IoU 0.5 is unambiguous.

All randomness flows through counter-based Philox streams keyed by
(seed, split, dataset, image), so regeneration is deterministic
regardless of execution order or thread count, and every label carries
an oracle mapping back to its true concept.

Shards persist as newline-delimited JSON with a header line; features
are base64 of the raw float32 little-endian payload (the same float
encoding the LSEB container uses).
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import formats
from .errors import HoldoutLeakError, InvalidSpecError, MalformedBoxError
from .store import LabelEntry, LabelSet, l2_normalize_rows

MAX_TRANSFORM_CONDITION = 10.0


@dataclass(frozen=True, eq=False)
class DatasetSpec:
    """One synthetic dataset: which concepts it labels and how it distorts them."""

    name: str
    prototype_subset: tuple[int, ...]
    images: int
    class_frequency: float = 0.0  # power-law exponent; 0 = uniform
    domain_transform: np.ndarray | None = None  # (dim, dim); None = identity

    def __post_init__(self):
        object.__setattr__(self, "prototype_subset", tuple(self.prototype_subset))
        if len(self.prototype_subset) == 0:
            raise InvalidSpecError(f"{self.name!r}: prototype subset is empty")
        if len(set(self.prototype_subset)) != len(self.prototype_subset):
            raise InvalidSpecError(f"{self.name!r}: duplicate prototypes in subset")
        if self.images < 1:
            raise InvalidSpecError(f"{self.name!r}: needs at least one image")
        if self.class_frequency < 0:
            raise InvalidSpecError(f"{self.name!r}: class_frequency must be >= 0")
        if self.domain_transform is not None:
            t = np.asarray(self.domain_transform, dtype=np.float64)
            if t.ndim != 2 or t.shape[0] != t.shape[1]:
                raise InvalidSpecError(f"{self.name!r}: transform must be square")
            cond = float(np.linalg.cond(t))
            if not np.isfinite(cond) or cond > MAX_TRANSFORM_CONDITION * (1 + 1e-9):
                raise InvalidSpecError(
                    f"{self.name!r}: transform condition {cond:.3g} exceeds "
                    f"{MAX_TRANSFORM_CONDITION}"
                )
            object.__setattr__(self, "domain_transform", t)


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """Full corpus recipe; identical specs generate identical corpora."""

    seed: int
    n_prototypes: int
    dim: int
    datasets: tuple[DatasetSpec, ...]
    noise_text: float = 0.02
    noise_feat: float = 0.05
    background_rate: float = 0.2
    canvas: float = 1000.0
    min_boxes: int = 1
    max_boxes: int = 8

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        if self.n_prototypes < 1 or self.dim < 1:
            raise InvalidSpecError("need n_prototypes >= 1 and dim >= 1")
        if self.noise_text < 0 or self.noise_feat < 0:
            raise InvalidSpecError("noise sigmas must be >= 0")
        if not (0.0 <= self.background_rate < 1.0):
            raise InvalidSpecError("background_rate must lie in [0, 1)")
        if not (1 <= self.min_boxes <= self.max_boxes):
            raise InvalidSpecError("need 1 <= min_boxes <= max_boxes")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise InvalidSpecError("dataset names must be unique")
        for d in self.datasets:
            if max(d.prototype_subset) >= self.n_prototypes or min(d.prototype_subset) < 0:
                raise InvalidSpecError(f"{d.name!r}: subset outside prototype pool")
            if d.domain_transform is not None and d.domain_transform.shape[0] != self.dim:
                raise InvalidSpecError(f"{d.name!r}: transform shape != dim")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_prototypes": self.n_prototypes,
            "dim": self.dim,
            "noise_text": self.noise_text,
            "noise_feat": self.noise_feat,
            "background_rate": self.background_rate,
            "canvas": self.canvas,
            "min_boxes": self.min_boxes,
            "max_boxes": self.max_boxes,
            "datasets": [
                {
                    "name": d.name,
                    "prototype_subset": list(d.prototype_subset),
                    "images": d.images,
                    "class_frequency": d.class_frequency,
                    "domain_transform": None
                    if d.domain_transform is None
                    else d.domain_transform.tolist(),
                }
                for d in self.datasets
            ],
        }


@dataclass(frozen=True, eq=False)
class SynthInstance:
    """One region proposal: its box, optional label, and raw feature."""

    image_id: str
    box: tuple[float, float, float, float]
    local_label: int | None
    raw_feature: np.ndarray

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise MalformedBoxError(f"degenerate box {self.box}")

    @property
    def is_background(self) -> bool:
        return self.local_label is None


@dataclass(frozen=True, eq=False)
class ConceptOracle:
    """Ground truth behind a generated corpus."""

    prototypes: np.ndarray  # (n_prototypes, dim) unit rows
    label_concepts: dict  # (dataset, local_index) -> concept id
    transforms: dict  # dataset -> (dim, dim) transform actually used

    def concept_of(self, dataset: str, local_index: int) -> int:
        return self.label_concepts[(dataset, local_index)]


def spec_hash(spec: SynthSpec) -> str:
    return formats.sha256_bytes(formats.canonical_json(spec.to_dict()).encode())[:16]


def _stream(seed: int, *path) -> np.random.Generator:
    """Philox stream keyed by (seed, path...); independent of call order."""
    material = "\x1f".join([str(int(seed))] + [str(p) for p in path]).encode()
    key = int.from_bytes(hashlib.sha256(material).digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def make_prototypes(spec: SynthSpec) -> np.ndarray:
    rng = _stream(spec.seed, "prototypes")
    protos = rng.normal(size=(spec.n_prototypes, spec.dim))
    return l2_normalize_rows(protos.astype(np.float64))


def _dataset_labelset(
    spec: SynthSpec, name: str, subset: Sequence[int], protos: np.ndarray
) -> tuple[LabelSet, np.ndarray]:
    rng = _stream(spec.seed, "labels", name)
    rows = []
    entries = []
    for concept in subset:
        jitter = rng.normal(scale=spec.noise_text, size=spec.dim) if spec.noise_text > 0 else 0.0
        rows.append(protos[concept] + jitter)
        entries.append(LabelEntry(id=f"c{concept:03d}", display=f"concept {concept}"))
    emb = l2_normalize_rows(np.asarray(rows, dtype=np.float64)).astype(np.float32)
    labelset = LabelSet(name=name, labels=tuple(entries), dim=spec.dim, normalized=True)
    return labelset, emb


def _class_probs(k: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, k + 1, dtype=np.float64)
    w = ranks ** (-exponent)
    return w / w.sum()


def _generate_images(
    spec: SynthSpec,
    name: str,
    subset: Sequence[int],
    transform: np.ndarray,
    images: int,
    protos: np.ndarray,
    split: str,
) -> list[SynthInstance]:
    grid = int(np.ceil(np.sqrt(spec.max_boxes))) + 1
    cell = spec.canvas / grid
    probs = None
    instances: list[SynthInstance] = []
    for i in range(images):
        rng = _stream(spec.seed, split, name, i)
        n_boxes = int(rng.integers(spec.min_boxes, spec.max_boxes + 1))
        cells = rng.choice(grid * grid, size=n_boxes, replace=False)
        image_id = f"{name}-{split}-{i:05d}"
        for j, cidx in enumerate(cells):
            cx = (int(cidx) % grid) * cell
            cy = (int(cidx) // grid) * cell
            w = rng.uniform(0.35, 0.85) * cell
            h = rng.uniform(0.35, 0.85) * cell
            x1 = cx + rng.uniform(0.0, cell - w)
            y1 = cy + rng.uniform(0.0, cell - h)
            box = (float(x1), float(y1), float(x1 + w), float(y1 + h))
            if rng.random() < spec.background_rate:
                # Clutter: an isotropic direction at prototype scale.
                raw = transform @ (rng.normal(size=spec.dim) / np.sqrt(spec.dim))
                local = None
            else:
                if probs is None:
                    exponent = next(
                        (d.class_frequency for d in spec.datasets if d.name == name), 0.0
                    )
                    probs = _class_probs(len(subset), exponent)
                local = int(rng.choice(len(subset), p=probs))
                concept = subset[local]
                noise = (
                    rng.normal(scale=spec.noise_feat, size=spec.dim)
                    if spec.noise_feat > 0
                    else 0.0
                )
                raw = transform @ (protos[concept] + noise)
            instances.append(
                SynthInstance(
                    image_id=image_id,
                    box=box,
                    local_label=local,
                    raw_feature=raw.astype(np.float32),
                )
            )
    return instances


def generate(
    spec: SynthSpec, split: str = "train", images_override: dict | None = None
) -> tuple[list[tuple[LabelSet, np.ndarray]], dict, ConceptOracle]:
    """Generate label sets, per-dataset shards, and the concept oracle.

    ``split`` salts the per-image random streams so evaluation shards
    ("eval") draw fresh instances from the same distributions; label
    embeddings are split-independent. ``images_override`` maps dataset
    name to an image count replacing the spec's.
    """
    protos = make_prototypes(spec)
    labelsets: list[tuple[LabelSet, np.ndarray]] = []
    shards: dict[str, list[SynthInstance]] = {}
    label_concepts: dict = {}
    transforms: dict = {}
    for ds in spec.datasets:
        transform = (
            np.eye(spec.dim) if ds.domain_transform is None else ds.domain_transform
        )
        transforms[ds.name] = transform
        labelsets.append(_dataset_labelset(spec, ds.name, ds.prototype_subset, protos))
        for local, concept in enumerate(ds.prototype_subset):
            label_concepts[(ds.name, local)] = concept
        images = ds.images if not images_override else images_override.get(ds.name, ds.images)
        shards[ds.name] = _generate_images(
            spec, ds.name, ds.prototype_subset, transform, images, protos, split
        )
    oracle = ConceptOracle(
        prototypes=protos, label_concepts=label_concepts, transforms=transforms
    )
    return labelsets, shards, oracle


def split_unseen(
    spec: SynthSpec,
    holdout_concepts: Sequence[int],
    *,
    name: str = "downstream",
    images: int = 40,
    domain_transform: np.ndarray | None = None,
    include_seen: Sequence[int] = (),
) -> tuple[LabelSet, np.ndarray, list[SynthInstance]]:
    """Build a downstream set over held-out concepts (plus, optionally,
    seen concepts under a novel domain transform for direct transfer).

    Raises :class:`HoldoutLeakError` if any holdout concept appears in a
    training dataset's subset.
    """
    trained = {c for d in spec.datasets for c in d.prototype_subset}
    holdout = tuple(holdout_concepts)
    for c in holdout:
        if c in trained:
            raise HoldoutLeakError(f"concept {c} appears in a training dataset")
        if not (0 <= c < spec.n_prototypes):
            raise InvalidSpecError(f"holdout concept {c} outside prototype pool")
    subset = holdout + tuple(include_seen)
    if len(set(subset)) != len(subset):
        raise InvalidSpecError("downstream concepts must be unique")
    if len(subset) == 0:
        raise InvalidSpecError("downstream set needs at least one concept")
    protos = make_prototypes(spec)
    labelset, emb = _dataset_labelset(spec, name, subset, protos)
    transform = np.eye(spec.dim) if domain_transform is None else np.asarray(
        domain_transform, dtype=np.float64
    )
    shard = _generate_images(spec, name, subset, transform, images, protos, "downstream")
    return labelset, emb, shard


def mild_rotation(dim: int, strength: float, seed: int, *path) -> np.ndarray:
    """A well-conditioned transform ``I + strength * A`` with unit-scale A.

    Used to realize per-dataset domain shift; condition number stays
    small for strength well below 1.
    """
    rng = _stream(seed, "transform", *path)
    a = rng.normal(size=(dim, dim)) / np.sqrt(dim)
    return np.eye(dim) + strength * a


# ---------------------------------------------------------------------------
# shard persistence


def write_shard(
    path: Path | str,
    instances: Sequence[SynthInstance],
    *,
    dataset: str,
    corpus_hash: str,
    split: str = "train",
    dim: int | None = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if dim is None and len(instances) > 0:
        dim = int(instances[0].raw_feature.shape[0])
    header = {
        "spec_hash": corpus_hash,
        "dataset": dataset,
        "count": len(instances),
        "split": split,
        "dim": dim,
    }
    lines = [formats.canonical_json(header)]
    for inst in instances:
        feat = np.ascontiguousarray(inst.raw_feature, dtype=np.float32)
        lines.append(
            formats.canonical_json(
                {
                    "image_id": inst.image_id,
                    "box": [float(v) for v in inst.box],
                    "local_label": inst.local_label,
                    "feature_b64": base64.b64encode(feat.tobytes()).decode("ascii"),
                }
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_shard(path: Path | str) -> tuple[dict, list[SynthInstance]]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise InvalidSpecError(f"{path}: empty shard file")
    header = json.loads(lines[0])
    instances = []
    for line in lines[1 : header["count"] + 1]:
        rec = json.loads(line)
        feat = np.frombuffer(base64.b64decode(rec["feature_b64"]), dtype="<f4")
        instances.append(
            SynthInstance(
                image_id=rec["image_id"],
                box=tuple(rec["box"]),
                local_label=rec["local_label"],
                raw_feature=np.array(feat),
            )
        )
    return header, instances
