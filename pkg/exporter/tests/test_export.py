"""Exporter: format compliance with the consumer, determinism, errors."""

import json
import warnings

import numpy as np
import pytest

from embed_exporter import (
    EmptyNamesError,
    EncoderUnavailableError,
    ExportJob,
    default_templates,
    export,
    resolve_encoder,
)
from embed_exporter.cli import main


def write_names(tmp_path, names, fname="labels.txt"):
    path = tmp_path / fname
    path.write_text("\n".join(names) + "\n")
    return path


def try_real_encoder():
    try:
        return resolve_encoder("st:sentence-transformers/all-MiniLM-L6-v2")
    except EncoderUnavailableError as exc:
        pytest.skip(f"no real text encoder available here: {exc}")


class TestFormatCompliance:
    def test_output_loads_through_consumer_validator_without_warnings(self, tmp_path):
        labelspace_align = pytest.importorskip("labelspace_align")
        names = write_names(tmp_path, ["person", "boy", "avocado"])
        out = export(ExportJob(names_file=names, out_dir=tmp_path / "out",
                               encoder="debug-hash:32"))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            labelset, emb = labelspace_align.load_labelset(out)
        assert caught == []
        assert len(labelset) == 3
        assert labelset.dim == 32
        assert labelset.normalized
        assert emb.dtype == np.float32
        assert [e.display for e in labelset.labels] == ["person", "boy", "avocado"]
        assert all(len(e.prompts) == len(default_templates()) for e in labelset.labels)

    def test_binary_layout(self, tmp_path):
        names = write_names(tmp_path, ["cat", "dog"])
        out = export(ExportJob(names_file=names, out_dir=tmp_path / "out",
                               encoder="debug-hash:16"))
        raw = (out / "embeddings.bin").read_bytes()
        assert raw[:4] == b"LSEB"
        assert len(raw) == 16 + 2 * 16 * 4
        meta = json.loads((out / "meta.json").read_text())
        assert set(meta) == {"name", "dim", "normalized", "embedding_file", "labels"}

    def test_rows_are_unit_norm(self, tmp_path):
        names = write_names(tmp_path, ["cat", "dog", "fish"])
        out = export(ExportJob(names_file=names, out_dir=tmp_path / "out"))
        raw = (out / "embeddings.bin").read_bytes()
        m = np.frombuffer(raw[16:], dtype="<f4").reshape(3, -1)
        np.testing.assert_allclose(np.linalg.norm(m.astype(np.float64), axis=1), 1.0,
                                   atol=1e-5)


class TestAveragingOrder:
    def test_mean_then_normalize_matches_consumer(self, tmp_path):
        labelspace_align = pytest.importorskip("labelspace_align")
        names = write_names(tmp_path, ["tree"])
        templates = tmp_path / "templates.txt"
        templates.write_text("a photo of a {}.\na drawing of a {}.\n")
        out = export(ExportJob(names_file=names, templates_file=templates,
                               out_dir=tmp_path / "out", encoder="debug-hash:24"))
        _, emb = labelspace_align.load_labelset(out)
        encoder = resolve_encoder("debug-hash:24")
        per_prompt = encoder.encode(["a photo of a tree.", "a drawing of a tree."])
        expected = labelspace_align.average_prompt_embeddings(list(per_prompt))
        np.testing.assert_allclose(emb[0].astype(np.float64), expected, atol=1e-6)


class TestDeterminism:
    def test_repeated_export_byte_identical(self, tmp_path):
        names = write_names(tmp_path, ["cat", "dog"])
        a = export(ExportJob(names_file=names, out_dir=tmp_path / "a"))
        b = export(ExportJob(names_file=names, out_dir=tmp_path / "b"))
        assert (a / "embeddings.bin").read_bytes() == (b / "embeddings.bin").read_bytes()
        assert (a / "meta.json").read_bytes() == (b / "meta.json").read_bytes()


class TestErrors:
    def test_empty_names(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("\n\n")
        with pytest.raises(EmptyNamesError):
            export(ExportJob(names_file=path, out_dir=tmp_path / "out"))

    def test_unavailable_encoder(self, tmp_path):
        names = write_names(tmp_path, ["cat"])
        with pytest.raises(EncoderUnavailableError):
            export(ExportJob(names_file=names, out_dir=tmp_path / "out",
                             encoder="st:this-model-does-not-exist-anywhere"))

    def test_cli_exit_codes(self, tmp_path, capsys):
        names = write_names(tmp_path, ["cat"])
        assert main(["export", "--names", str(names),
                     "--out", str(tmp_path / "ok")]) == 0
        empty = tmp_path / "none.txt"
        empty.write_text("")
        assert main(["export", "--names", str(empty),
                     "--out", str(tmp_path / "bad")]) == 2


class TestRealEmbeddings:
    def test_semantic_direction(self, tmp_path):
        """With a real encoder, related words score higher than unrelated."""
        encoder = try_real_encoder()
        names = write_names(tmp_path, ["person", "boy", "avocado"])
        out = export(ExportJob(names_file=names, out_dir=tmp_path / "out",
                               encoder=encoder.name))
        raw = (out / "embeddings.bin").read_bytes()
        m = np.frombuffer(raw[16:], dtype="<f4").reshape(3, -1).astype(np.float64)
        person, boy, avocado = m
        cos_pb = float(person @ boy)
        cos_pa = float(person @ avocado)
        assert cos_pb > cos_pa
