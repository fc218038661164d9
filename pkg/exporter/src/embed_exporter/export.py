"""Export label names to the labelspace-align label set format.

For every label name, each prompt template is filled and encoded; the
prompt embeddings are averaged and the mean re-normalized to unit L2
norm (mean first, normalize second). The output directory holds
``meta.json`` and ``embeddings.bin`` exactly per the consumer's wire
format: a 16-byte header (magic ``LSEB``, version 1, row count, column
count, all u32 little-endian) followed by float32 row-major data. An
``export.json`` sidecar records the encoder and template provenance.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .encoders import resolve_encoder

MAGIC = b"LSEB"
VERSION = 1


class EmptyNamesError(Exception):
    """The names file contains no label names."""


@dataclass(frozen=True)
class ExportJob:
    names_file: Path
    out_dir: Path
    encoder: str = "debug-hash"
    templates_file: Path | None = None  # None = the bundled standard list

    def __post_init__(self):
        object.__setattr__(self, "names_file", Path(self.names_file))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.templates_file is not None:
            object.__setattr__(self, "templates_file", Path(self.templates_file))


def default_templates() -> list[str]:
    text = resources.files("embed_exporter").joinpath("templates.txt").read_text("utf-8")
    return [line for line in text.splitlines() if line.strip()]


def _read_lines(path: Path) -> list[str]:
    return [line.strip() for line in path.read_text("utf-8").splitlines() if line.strip()]


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name.strip().lower())


def _fill(template: str, name: str) -> str:
    return template.format(name) if "{}" in template else f"{template} {name}"


def _write_matrix(path: Path, m: np.ndarray) -> None:
    m = np.ascontiguousarray(m, dtype=np.float32)
    header = struct.pack("<4sIII", MAGIC, VERSION, m.shape[0], m.shape[1])
    path.write_bytes(header + m.tobytes())


def export(job: ExportJob) -> Path:
    """Run the export; returns the written label set directory."""
    names = _read_lines(job.names_file)
    if not names:
        raise EmptyNamesError(f"no label names in {job.names_file}")
    templates = (
        _read_lines(job.templates_file)
        if job.templates_file is not None
        else default_templates()
    )
    if not templates:
        raise ValueError("need at least one prompt template")

    encoder = resolve_encoder(job.encoder)
    rows = []
    records = []
    for name in names:
        prompts = [_fill(t, name) for t in templates]
        per_prompt = encoder.encode(prompts)
        mean = per_prompt.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            raise ValueError(f"prompt embeddings for {name!r} average to zero")
        rows.append(mean / norm)
        records.append({"id": _slug(name), "display": name, "prompts": prompts})

    ids = [r["id"] for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("label names collide after slugging; make them distinct")

    matrix = np.asarray(rows, dtype=np.float64).astype(np.float32)
    job.out_dir.mkdir(parents=True, exist_ok=True)
    _write_matrix(job.out_dir / "embeddings.bin", matrix)
    meta = {
        "name": job.names_file.stem,
        "dim": int(matrix.shape[1]),
        "normalized": True,
        "embedding_file": "embeddings.bin",
        "labels": records,
    }
    (job.out_dir / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    provenance = {
        "encoder": encoder.name,
        "templates": len(templates),
        "names_file": job.names_file.name,
    }
    (job.out_dir / "export.json").write_text(
        json.dumps(provenance, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )
    return job.out_dir
