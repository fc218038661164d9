"""Label sets and their text-embedding matrices.

A label set is one dataset's ordered list of class labels together with
one embedding row per label. On disk it is a directory holding
``meta.json`` (name, dim, normalized flag, label records) and an LSEB
``embeddings.bin``; the float payload round-trips bit-exactly.

The list order of labels is canonical: every matrix in the system
(embeddings, similarity rows, score vectors) indexes labels by their
position here.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import formats
from .errors import (
    DimMismatchError,
    EmptyPromptListError,
    MissingFileError,
    NonFiniteEntryError,
    NotNormalizedError,
    ZeroRowError,
)

META_FILE = "meta.json"
EMBEDDING_FILE = "embeddings.bin"

# Unit-norm slack for stored rows; tighter 1e-6 applies to fresh output
# of l2_normalize_rows.
NORM_TOL_STORED = 1e-5


@dataclass(frozen=True)
class LabelEntry:
    """One class label: stable id, display name, and the prompts used
    to produce its embedding (empty for fixture data)."""

    id: str
    display: str
    prompts: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValueError("label id must be nonempty")
        if not self.display:
            raise ValueError("label display name must be nonempty")
        object.__setattr__(self, "prompts", tuple(self.prompts))


@dataclass(frozen=True)
class LabelSet:
    """An ordered, uniquely-keyed label list for one dataset."""

    name: str
    labels: tuple[LabelEntry, ...]
    dim: int
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        seen = set()
        for entry in self.labels:
            if entry.id in seen:
                raise ValueError(f"duplicate label id {entry.id!r} in {self.name!r}")
            seen.add(entry.id)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(entry.id for entry in self.labels)


def validate_embeddings(labelset: LabelSet, m: np.ndarray) -> None:
    """Check the matrix against its owning label set's invariants."""
    if m.ndim != 2:
        raise DimMismatchError(f"embeddings must be 2-D, got shape {m.shape}")
    if m.shape[0] != len(labelset):
        raise DimMismatchError(
            f"{labelset.name!r}: {len(labelset)} labels but {m.shape[0]} embedding rows"
        )
    if m.shape[1] != labelset.dim:
        raise DimMismatchError(
            f"{labelset.name!r}: dim {labelset.dim} declared, {m.shape[1]} columns found"
        )
    if not np.all(np.isfinite(m)):
        raise NonFiniteEntryError(f"{labelset.name!r}: embeddings contain NaN or Inf")
    if labelset.normalized and len(labelset) > 0:
        norms = np.linalg.norm(m.astype(np.float64), axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > NORM_TOL_STORED:
            raise NotNormalizedError(
                f"{labelset.name!r}: declared normalized but a row norm is off by {worst:.2e}"
            )


def average_prompt_embeddings(per_prompt: Sequence[np.ndarray]) -> np.ndarray:
    """Average one embedding per prompt into a single unit-norm label embedding.

    The mean is taken first and the result re-normalized to unit L2 norm.
    Permutation-invariant in the input list.
    """
    if len(per_prompt) == 0:
        raise EmptyPromptListError("need at least one prompt embedding")
    stacked = np.asarray(per_prompt, dtype=np.float64)
    if stacked.ndim != 2:
        raise DimMismatchError("prompt embeddings must all be 1-D vectors of equal length")
    if not np.all(np.isfinite(stacked)):
        raise NonFiniteEntryError("prompt embeddings contain NaN or Inf")
    mean = stacked.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        raise ZeroRowError("prompt embeddings average to the zero vector")
    return mean / norm


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Return a copy of ``m`` with every row scaled to unit L2 norm.

    Directions are unchanged; idempotent within 1e-7.
    """
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise NonFiniteEntryError("matrix contains NaN or Inf")
    work = m.astype(np.float64)
    norms = np.linalg.norm(work, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroRowError(f"row {bad} has zero norm")
    return (work / norms[:, None]).astype(m.dtype if m.dtype == np.float64 else np.float32)


def save_labelset(labelset: LabelSet, m: np.ndarray, path: Path | str) -> None:
    """Write ``meta.json`` + ``embeddings.bin`` under ``path`` (a directory)."""
    validate_embeddings(labelset, m)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    formats.write_matrix(path / EMBEDDING_FILE, m)
    meta = {
        "name": labelset.name,
        "dim": labelset.dim,
        "normalized": labelset.normalized,
        "embedding_file": EMBEDDING_FILE,
        "labels": [
            {"id": e.id, "display": e.display, "prompts": list(e.prompts)}
            for e in labelset.labels
        ],
    }
    formats.write_json(path / META_FILE, meta)


def load_labelset(path: Path | str) -> tuple[LabelSet, np.ndarray]:
    """Load and validate a label set directory."""
    path = Path(path)
    meta_path = path / META_FILE
    if not meta_path.is_file():
        raise MissingFileError(f"no {META_FILE} under {path}")
    meta = formats.read_json(meta_path)
    labelset = LabelSet(
        name=meta["name"],
        labels=tuple(
            LabelEntry(id=r["id"], display=r["display"], prompts=tuple(r.get("prompts", ())))
            for r in meta["labels"]
        ),
        dim=int(meta["dim"]),
        normalized=bool(meta["normalized"]),
    )
    emb_path = path / meta.get("embedding_file", EMBEDDING_FILE)
    m = formats.read_matrix(emb_path)
    validate_embeddings(labelset, m)
    return labelset, m


def labelset_checksum(labelset: LabelSet, m: np.ndarray) -> str:
    """Content hash of a label set: canonical metadata + exact payload bytes."""
    meta = formats.canonical_json(
        {
            "name": labelset.name,
            "dim": labelset.dim,
            "ids": list(labelset.ids),
        }
    ).encode()
    return formats.sha256_bytes(meta, b"\x00", formats.matrix_bytes(m))
