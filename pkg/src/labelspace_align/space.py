"""Unified label spaces built by concatenating per-dataset label sets.

Concatenation never merges labels: two datasets calling a class by the
same name stay two distinct entries, each keeping its own embedding row.
Subspace views select one dataset's contiguous index range (or wrap an
external never-seen label set) so a trained model can be pointed at any
label space at test time without touching its parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import formats, store
from .errors import (
    DimMismatchError,
    EmptyInputError,
    UnknownDatasetError,
)

SOURCES_FILE = "sources.json"


@dataclass(frozen=True)
class UnifiedLabel:
    """One entry of the unified space with its provenance."""

    global_index: int
    dataset: str
    local_index: int
    id: str
    display: str


@dataclass(frozen=True)
class UnifiedLabelSpace:
    """Disjoint-union concatenation of K label sets, in source order."""

    sources: tuple[tuple[str, int], ...]
    entries: tuple[UnifiedLabel, ...]
    dim: int
    embeddings: np.ndarray  # (n, dim) float32

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def dataset_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.sources)

    def offset(self, dataset: str) -> int:
        off = 0
        for name, count in self.sources:
            if name == dataset:
                return off
            off += count
        raise UnknownDatasetError(f"dataset {dataset!r} not in {self.dataset_names}")

    def count(self, dataset: str) -> int:
        for name, count in self.sources:
            if name == dataset:
                return count
        raise UnknownDatasetError(f"dataset {dataset!r} not in {self.dataset_names}")

    def global_index(self, dataset: str, local_index: int) -> int:
        return self.offset(dataset) + local_index

    @property
    def checksum(self) -> str:
        return space_checksum(self)


@dataclass(frozen=True)
class SubspaceView:
    """An ordered selection of labels to score against at test time.

    ``global_indices`` maps view positions back into the parent unified
    space; it is None for external (never-trained-on) label sets, whose
    embeddings are fresh rows rather than selected columns.
    """

    source: str
    names: tuple[str, ...]
    displays: tuple[str, ...]
    embeddings: np.ndarray  # (m, dim) float32
    global_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.global_indices is not None:
            idx = self.global_indices
            if len(set(idx)) != len(idx):
                raise ValueError("subspace indices must be unique")
        if len(set(self.names)) != len(self.names):
            raise ValueError("subspace label names must be unique")
        if len(self.names) != self.embeddings.shape[0]:
            raise DimMismatchError("one embedding row per selected label required")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])


def concat_label_spaces(
    sets: Sequence[tuple[store.LabelSet, np.ndarray]],
) -> UnifiedLabelSpace:
    """Concatenate K label sets into one unified space.

    Entries keep source order (all of dataset 1, then dataset 2, ...);
    embedding rows are copied bit-exactly; nothing is deduplicated.
    """
    if len(sets) == 0:
        raise EmptyInputError("need at least one label set")
    dim = sets[0][0].dim
    names = set()
    entries: list[UnifiedLabel] = []
    sources: list[tuple[str, int]] = []
    blocks: list[np.ndarray] = []
    g = 0
    for labelset, m in sets:
        store.validate_embeddings(labelset, m)
        if labelset.dim != dim:
            raise DimMismatchError(
                f"{labelset.name!r} has dim {labelset.dim}, expected {dim}"
            )
        if labelset.name in names:
            raise ValueError(f"duplicate dataset name {labelset.name!r}")
        names.add(labelset.name)
        sources.append((labelset.name, len(labelset)))
        for local, entry in enumerate(labelset.labels):
            entries.append(
                UnifiedLabel(
                    global_index=g,
                    dataset=labelset.name,
                    local_index=local,
                    id=entry.id,
                    display=entry.display,
                )
            )
            g += 1
        blocks.append(np.ascontiguousarray(m, dtype=np.float32))
    embeddings = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, dim), np.float32)
    return UnifiedLabelSpace(
        sources=tuple(sources),
        entries=tuple(entries),
        dim=dim,
        embeddings=embeddings,
    )


def subspace(space: UnifiedLabelSpace, dataset: str) -> SubspaceView:
    """View of one source dataset's contiguous global-index range."""
    off = space.offset(dataset)  # raises UnknownDatasetError
    count = space.count(dataset)
    idx = tuple(range(off, off + count))
    sel = space.entries[off : off + count]
    return SubspaceView(
        source=dataset,
        names=tuple(e.id for e in sel),
        displays=tuple(e.display for e in sel),
        embeddings=space.embeddings[off : off + count],
        global_indices=idx,
    )


def full_view(space: UnifiedLabelSpace) -> SubspaceView:
    """View over the whole unified space, names namespaced by dataset."""
    return SubspaceView(
        source="unified",
        names=tuple(f"{e.dataset}/{e.id}" for e in space.entries),
        displays=tuple(e.display for e in space.entries),
        embeddings=space.embeddings,
        global_indices=tuple(range(space.n)),
    )


def external_subspace(labels: store.LabelSet, emb: np.ndarray) -> SubspaceView:
    """Wrap a never-seen label set for zero-shot / direct-transfer scoring.

    Labels are always treated as fresh embeddings: an id that happens to
    collide with a training label never aliases back into the unified
    space.
    """
    store.validate_embeddings(labels, emb)
    return SubspaceView(
        source=f"external:{labels.name}",
        names=labels.ids,
        displays=tuple(e.display for e in labels.labels),
        embeddings=np.ascontiguousarray(emb, dtype=np.float32),
        global_indices=None,
    )


def space_checksum(space: UnifiedLabelSpace) -> str:
    meta = formats.canonical_json(
        {
            "sources": [[name, count] for name, count in space.sources],
            "dim": space.dim,
            "ids": [f"{e.dataset}/{e.id}" for e in space.entries],
        }
    ).encode()
    return formats.sha256_bytes(meta, b"\x00", formats.matrix_bytes(space.embeddings))


def save_unified(space: UnifiedLabelSpace, path: Path | str) -> None:
    """Persist as a labelset directory plus ``sources.json``.

    Entry ids are namespaced ``dataset/id`` in ``meta.json`` so they stay
    unique; ``sources.json`` records (dataset, count, offset) triples to
    reconstruct provenance.
    """
    path = Path(path)
    labelset = store.LabelSet(
        name="unified",
        labels=tuple(
            store.LabelEntry(id=f"{e.dataset}/{e.id}", display=e.display)
            for e in space.entries
        ),
        dim=space.dim,
        normalized=_rows_unit(space.embeddings),
    )
    store.save_labelset(labelset, space.embeddings, path)
    off = 0
    rows = []
    for name, count in space.sources:
        rows.append({"dataset": name, "count": count, "offset": off})
        off += count
    formats.write_json(path / SOURCES_FILE, rows)


def load_unified(path: Path | str) -> UnifiedLabelSpace:
    path = Path(path)
    labelset, m = store.load_labelset(path)
    rows = formats.read_json(path / SOURCES_FILE)
    entries: list[UnifiedLabel] = []
    sources: list[tuple[str, int]] = []
    for row in rows:
        name, count, off = row["dataset"], int(row["count"]), int(row["offset"])
        sources.append((name, count))
        for local in range(count):
            stored = labelset.labels[off + local]
            entries.append(
                UnifiedLabel(
                    global_index=off + local,
                    dataset=name,
                    local_index=local,
                    id=stored.id.removeprefix(f"{name}/"),
                    display=stored.display,
                )
            )
    if len(entries) != len(labelset):
        raise DimMismatchError(
            f"{SOURCES_FILE} covers {len(entries)} labels, meta has {len(labelset)}"
        )
    return UnifiedLabelSpace(
        sources=tuple(sources), entries=tuple(entries), dim=labelset.dim, embeddings=m
    )


def _rows_unit(m: np.ndarray, tol: float = store.NORM_TOL_STORED) -> bool:
    if m.shape[0] == 0:
        return True
    norms = np.linalg.norm(m.astype(np.float64), axis=1)
    return bool(np.max(np.abs(norms - 1.0)) <= tol)
