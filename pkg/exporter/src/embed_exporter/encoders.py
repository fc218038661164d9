"""Text encoder backends.

An encoder id picks a backend:

* ``st:<model>`` (or a bare model name) loads a sentence-transformers
  model; raises :class:`EncoderUnavailableError` when the package or the
  model weights are not available locally.
* ``debug-hash`` / ``debug-hash:<dim>`` is a deterministic fixture
  encoder with NO semantics (each text hashes to a fixed unit vector).
  It exists so the export pipeline and file format can run offline;
  never use it for qualitative similarity checks.
"""

from __future__ import annotations

import hashlib

import numpy as np


class EncoderUnavailableError(Exception):
    """The requested text encoder cannot be loaded in this environment."""


class HashEncoder:
    """Deterministic, semantics-free fixture encoder."""

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.name = f"debug-hash:{dim}"

    def encode(self, texts: list[str]) -> np.ndarray:
        rows = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            seed = int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")
            rng = np.random.Generator(np.random.PCG64(seed))
            v = rng.normal(size=self.dim)
            rows[i] = v / np.linalg.norm(v)
        return rows


class SentenceTransformerEncoder:
    """Real text embeddings via sentence-transformers."""

    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderUnavailableError(
                "sentence-transformers is not installed"
            ) from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:  # offline, bad id, missing weights
            raise EncoderUnavailableError(
                f"could not load encoder {model_id!r}: {exc}"
            ) from exc
        self.name = f"st:{model_id}"
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str]) -> np.ndarray:
        out = self._model.encode(texts, convert_to_numpy=True, show_progress_bar=False)
        return np.asarray(out, dtype=np.float64)


def resolve_encoder(spec: str):
    """Map an encoder id string to a ready encoder instance."""
    if spec.startswith("debug-hash"):
        _, _, dim = spec.partition(":")
        return HashEncoder(int(dim) if dim else 64)
    if spec.startswith("st:"):
        return SentenceTransformerEncoder(spec[3:])
    return SentenceTransformerEncoder(spec)
