"""Similarity matrix: cosines, per-row min-max normalization, degeneracy."""

import math

import numpy as np
import pytest

from labelspace_align.errors import NonFiniteEntryError, ZeroVectorError
from labelspace_align.similarity import (
    build_similarity_matrix,
    cosine,
    load_similarity_matrix,
    save_similarity_matrix,
    similarity_row,
)
from labelspace_align.space import concat_label_spaces
from labelspace_align.store import LabelEntry, LabelSet, l2_normalize_rows


def brute_cosine(a, b):
    """Independent oracle: fsum-accumulated dot and norms."""
    dot = math.fsum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(math.fsum(float(x) ** 2 for x in a))
    nb = math.sqrt(math.fsum(float(y) ** 2 for y in b))
    return dot / (na * nb)


def brute_similarity(emb):
    """Independent oracle for the whole matrix, entry by entry."""
    n = emb.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        cos = [1.0 if j == i else brute_cosine(emb[i], emb[j]) for j in range(n)]
        alpha = min(cos)
        if 1.0 - alpha < 1e-8:
            out[i] = 1.0
        else:
            out[i] = [(c - alpha) / (1.0 - alpha) for c in cos]
    return out


def vectors_with_cosines(cosines):
    """2-D embeddings whose cosines against row 0 match the given list."""
    angles = [math.acos(c) for c in cosines]
    return np.array([[math.cos(a), math.sin(a)] for a in angles])


class TestCosine:
    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_colinear_scale_invariant(self):
        assert cosine(np.array([2.0, 0.0]), np.array([1.0, 0.0])) == 1.0

    def test_random_pairs_vs_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a = rng.normal(size=32)
            b = rng.normal(size=32)
            assert abs(cosine(a, b) - brute_cosine(a, b)) < 1e-6

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError):
            cosine(np.zeros(3), np.ones(3))


class TestSimilarityRow:
    def test_already_normalized_cos_row(self):
        emb = vectors_with_cosines([1.0, 0.5, 0.0])
        np.testing.assert_allclose(similarity_row(0, emb), [1.0, 0.5, 0.0], atol=1e-12)

    def test_affine_rescaling(self):
        emb = vectors_with_cosines([1.0, 0.6, 0.2])
        np.testing.assert_allclose(similarity_row(0, emb), [1.0, 0.5, 0.0], atol=1e-12)

    def test_degenerate_row_all_ones(self):
        emb = np.array([[1.0, 0.0]] * 3)
        np.testing.assert_array_equal(similarity_row(0, emb), [1.0, 1.0, 1.0])


class TestBuildMatrix:
    def test_orthonormal_labels_identity_pattern(self):
        emb = np.eye(3)
        sim = build_similarity_matrix(emb)
        np.testing.assert_array_equal(sim.data, np.eye(3, dtype=np.float32))
        assert sim.epsilon_rows == ()
        np.testing.assert_allclose(sim.data, brute_similarity(emb), atol=1e-6)

    def test_single_label_degenerate(self):
        sim = build_similarity_matrix(np.array([[0.0, 1.0]]))
        np.testing.assert_array_equal(sim.data, [[1.0]])
        assert sim.epsilon_rows == (0,)

    def test_duplicate_rows_map_to_one(self):
        rng = np.random.default_rng(3)
        emb = l2_normalize_rows(rng.normal(size=(4, 8)))
        emb[2] = emb[0]
        sim = build_similarity_matrix(emb)
        assert sim.data[0, 2] == 1.0
        assert sim.data[2, 0] == 1.0

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(19)
        emb = rng.normal(size=(12, 6))
        sim = build_similarity_matrix(emb)
        np.testing.assert_allclose(sim.data, brute_similarity(emb), atol=1e-6)

    def test_asymmetric_fixture(self):
        # three non-orthonormal vectors with different row minima
        emb = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        sim = build_similarity_matrix(emb)
        assert sim.data[0, 1] != sim.data[1, 0]
        assert not np.array_equal(sim.data, sim.data.T)


class TestInvariants:
    def test_random_sets(self):
        rng = np.random.default_rng(101)
        for _ in range(25):
            n = int(rng.integers(2, 40))
            d = int(rng.integers(2, 24))
            emb = rng.normal(size=(n, d))
            sim = build_similarity_matrix(emb)
            assert np.all(np.diag(sim.data) == 1.0)
            assert sim.data.min() >= 0.0 and sim.data.max() <= 1.0
            for i in range(n):
                if i not in sim.epsilon_rows:
                    assert sim.data[i].min() == 0.0

    def test_order_preservation(self):
        rng = np.random.default_rng(67)
        emb = rng.normal(size=(20, 8))
        unit = emb / np.linalg.norm(emb, axis=1)[:, None]
        cos = unit @ unit.T
        for i in range(20):
            row = similarity_row(i, emb)
            order_cos = np.argsort(cos[i], kind="stable")
            order_sim = np.argsort(row, kind="stable")
            assert np.array_equal(order_cos, order_sim)

    def test_positive_scale_invariance(self):
        rng = np.random.default_rng(8)
        emb = rng.normal(size=(10, 5))
        base = build_similarity_matrix(emb).data
        scaled = emb.copy()
        scaled[3] *= 17.0
        rescaled = build_similarity_matrix(scaled).data
        assert np.max(np.abs(base.astype(np.float64) - rescaled.astype(np.float64))) < 1e-6

    def test_from_unified_space_records_checksum(self):
        rng = np.random.default_rng(2)
        emb = l2_normalize_rows(rng.normal(size=(3, 4))).astype(np.float32)
        labels = tuple(LabelEntry(id=f"l{i}", display=f"l{i}") for i in range(3))
        u = concat_label_spaces([(LabelSet(name="a", labels=labels, dim=4), emb)])
        sim = build_similarity_matrix(u)
        assert sim.source_checksum == u.checksum

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteEntryError):
            build_similarity_matrix(np.array([[1.0, np.nan], [0.0, 1.0]]))


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        sim = build_similarity_matrix(rng.normal(size=(6, 4)))
        save_similarity_matrix(sim, tmp_path / "S.bin")
        loaded = load_similarity_matrix(tmp_path / "S.bin")
        assert loaded.data.tobytes() == sim.data.tobytes()
        assert loaded.epsilon_rows == sim.epsilon_rows
        np.testing.assert_array_equal(loaded.row_min, sim.row_min)

    def test_rerun_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(5)
        emb = rng.normal(size=(6, 4))
        save_similarity_matrix(build_similarity_matrix(emb), tmp_path / "a.bin")
        save_similarity_matrix(build_similarity_matrix(emb), tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
