"""Label semantic similarity: cosines min-max normalized per row.

Row i rescales the cosines between label i's embedding and every label
embedding so that the row minimum lands on 0 and the self-similarity on
1 (the row maximum is the self-cosine, which is 1 by definition). The
result is a relation profile per label; it is generally NOT symmetric
because each row uses its own minimum.

Rows whose cosines are all (numerically) 1 cannot be rescaled; they are
set to all-ones and recorded as degenerate rather than treated as
errors: indistinguishable labels are maximally related.

Everything here is computed offline from embeddings alone; accumulation
is in float64, storage in float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .errors import NonFiniteEntryError, ZeroVectorError
from .space import UnifiedLabelSpace

DEGENERATE_EPS = 1e-8
SIMMETA_FILE = "simmeta.json"


@dataclass(frozen=True)
class SimilarityMatrix:
    """Per-row min-max-normalized label similarity profiles."""

    data: np.ndarray  # (n, n) float32, entries in [0, 1], diagonal exactly 1
    row_min: np.ndarray  # (n,) float64: the cosine minimum each row used
    epsilon_rows: tuple[int, ...]  # degenerate rows (all entries forced to 1)
    source_checksum: str | None = None

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    def row(self, i: int) -> np.ndarray:
        return self.data[i]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors, accumulated in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ZeroVectorError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFiniteEntryError("cosine inputs must be finite")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _cosine_rows(emb: np.ndarray) -> np.ndarray:
    """All-pairs cosine matrix in float64 with the diagonal pinned to 1."""
    work = np.asarray(emb, dtype=np.float64)
    if not np.all(np.isfinite(work)):
        raise NonFiniteEntryError("embeddings contain NaN or Inf")
    norms = np.linalg.norm(work, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVectorError("an embedding row has zero norm")
    unit = work / norms[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    # The self-cosine is 1 by definition; pinning it avoids the last-ulp
    # rounding of sqrt-based norms and makes diagonals exact.
    np.fill_diagonal(cos, 1.0)
    return cos


def _normalize_row(cos_row: np.ndarray, i: int) -> tuple[np.ndarray, float, bool]:
    alpha = float(np.min(cos_row))
    if 1.0 - alpha < DEGENERATE_EPS:
        return np.ones_like(cos_row), alpha, True
    row = (cos_row - alpha) / (1.0 - alpha)
    row[i] = 1.0
    return row, alpha, False


def similarity_row(i: int, emb: np.ndarray) -> np.ndarray:
    """Row i of the similarity matrix, in float64.

    Entry j is (cos(t_i, t_j) - alpha_i) / (1 - alpha_i) with alpha_i the
    row's cosine minimum, so the self-entry is exactly 1 and the row
    minimum exactly 0 unless the row is degenerate (then all ones).
    """
    work = np.asarray(emb, dtype=np.float64)
    if not np.all(np.isfinite(work)):
        raise NonFiniteEntryError("embeddings contain NaN or Inf")
    norms = np.linalg.norm(work, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVectorError("an embedding row has zero norm")
    unit = work / norms[:, None]
    cos_row = np.clip(unit @ unit[i], -1.0, 1.0)
    cos_row[i] = 1.0
    row, _, _ = _normalize_row(cos_row, i)
    return row


def build_similarity_matrix(
    source: UnifiedLabelSpace | np.ndarray,
) -> SimilarityMatrix:
    """Build the full n-by-n similarity matrix from label embeddings.

    Deterministic for fixed input; row computations are independent of
    one another, so the result never depends on evaluation order.
    """
    if isinstance(source, UnifiedLabelSpace):
        emb = source.embeddings
        checksum = source.checksum
    else:
        emb = np.asarray(source)
        checksum = None
    cos = _cosine_rows(emb)
    n = cos.shape[0]
    row_min = cos.min(axis=1)
    degenerate = (1.0 - row_min) < DEGENERATE_EPS
    denom = np.where(degenerate, 1.0, 1.0 - row_min)
    data = (cos - row_min[:, None]) / denom[:, None]
    data[degenerate, :] = 1.0
    np.fill_diagonal(data, 1.0)
    out = np.clip(data.astype(np.float32), 0.0, 1.0)
    return SimilarityMatrix(
        data=out,
        row_min=row_min,
        epsilon_rows=tuple(int(i) for i in np.flatnonzero(degenerate)),
        source_checksum=checksum,
    )


def save_similarity_matrix(sim: SimilarityMatrix, path: Path | str) -> None:
    """Write the matrix as LSEB plus a ``simmeta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    formats.write_matrix(path, sim.data)
    meta = {
        "epsilon_rows": list(sim.epsilon_rows),
        "row_min": [float(a) for a in sim.row_min],
        "embedding_checksum": sim.source_checksum,
        "matrix_file": path.name,
    }
    formats.write_json(path.parent / SIMMETA_FILE, meta)


def load_similarity_matrix(path: Path | str) -> SimilarityMatrix:
    path = Path(path)
    data = formats.read_matrix(path)
    meta = formats.read_json(path.parent / SIMMETA_FILE)
    return SimilarityMatrix(
        data=data,
        row_min=np.asarray(meta["row_min"], dtype=np.float64),
        epsilon_rows=tuple(meta["epsilon_rows"]),
        source_checksum=meta.get("embedding_checksum"),
    )
