"""Inference: scoring, label-space swapping, detection IO."""

import math

import numpy as np
import pytest

from labelspace_align.alignment import LossConfig
from labelspace_align.errors import (
    DimMismatchError,
    EmptyLabelSpaceError,
    LabelSpaceMismatchError,
)
from labelspace_align.infer import (
    Detection,
    predict,
    predict_batch,
    read_detections,
    write_detections,
)
from labelspace_align.space import (
    SubspaceView,
    concat_label_spaces,
    external_subspace,
    full_view,
    subspace,
)
from labelspace_align.store import LabelEntry, LabelSet, l2_normalize_rows
from labelspace_align.synth import SynthInstance
from labelspace_align.train import ToyModel


def identity_model(dim, tau=0.07):
    return ToyModel(
        W=np.eye(dim, dtype=np.float32),
        b=np.zeros(dim, dtype=np.float32),
        cfg=LossConfig(tau=tau),
        space_checksum="",
    )


def make_view(emb, prefix="l"):
    emb = np.ascontiguousarray(emb, dtype=np.float32)
    n = emb.shape[0]
    return SubspaceView(
        source="test",
        names=tuple(f"{prefix}{i}" for i in range(n)),
        displays=tuple(f"{prefix}{i}" for i in range(n)),
        embeddings=emb,
        global_indices=None,
    )


def make_space(sizes, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    sets = []
    for k, n in enumerate(sizes):
        emb = l2_normalize_rows(rng.normal(size=(n, dim))).astype(np.float32)
        labels = tuple(LabelEntry(id=f"d{k}l{i}", display=f"{i}") for i in range(n))
        sets.append((LabelSet(name=f"d{k}", labels=labels, dim=dim), emb))
    return concat_label_spaces(sets)


class TestPredict:
    def test_single_label_target(self):
        model = identity_model(4)
        view = make_view(np.eye(4)[:1])
        rng = np.random.default_rng(0)
        for _ in range(5):
            _, arg = predict(model, rng.normal(size=4), view)
            assert arg == 0

    def test_colinear_feature_wins_with_expected_score(self):
        model = identity_model(4, tau=0.07)
        view = make_view(np.eye(4))
        scores, arg = predict(model, np.eye(4)[2], view)
        assert arg == 2
        assert abs(scores[2] - 1.0 / (1.0 + math.exp(-1.0 / 0.07))) < 1e-9

    def test_random_vs_bruteforce(self):
        rng = np.random.default_rng(1)
        dim = 8
        model = ToyModel(
            W=rng.normal(size=(dim, dim)).astype(np.float32),
            b=rng.normal(size=dim).astype(np.float32) * 0.1,
            cfg=LossConfig(tau=0.5),
        )
        emb = l2_normalize_rows(rng.normal(size=(10, dim)))
        view = make_view(emb)
        for _ in range(20):
            raw = rng.normal(size=dim)
            scores, arg = predict(model, raw, view)
            v = model.W.astype(np.float64) @ raw + model.b.astype(np.float64)
            brute = []
            for row in emb.astype(np.float64):
                dot = math.fsum(a * b for a, b in zip(v, row))
                nv = math.sqrt(math.fsum(x * x for x in v))
                nr = math.sqrt(math.fsum(x * x for x in row))
                brute.append(1.0 / (1.0 + math.exp(-(dot / (nv * nr)) / 0.5)))
            brute = np.array(brute)
            assert int(np.argmax(brute)) == arg
            assert np.max(np.abs(scores - brute)) < 1e-6

    def test_feature_scale_invariance(self):
        rng = np.random.default_rng(2)
        model = identity_model(6)
        view = make_view(l2_normalize_rows(rng.normal(size=(5, 6))))
        raw = rng.normal(size=6)
        s1, a1 = predict(model, raw, view)
        s2, a2 = predict(model, 13.0 * raw, view)
        assert a1 == a2
        assert np.max(np.abs(s1 - s2)) < 1e-6

    def test_monotone_rescoring(self):
        rng = np.random.default_rng(3)
        model = identity_model(6)
        view = make_view(l2_normalize_rows(rng.normal(size=(8, 6))))
        raw = rng.normal(size=6)
        rankings = []
        for tau in (0.07, 0.5, 1.0, 5.0):
            scores, _ = predict(model, raw, view, tau=tau)
            rankings.append(tuple(np.argsort(scores)))
        assert len(set(rankings)) == 1

    def test_empty_label_space(self):
        model = identity_model(4)
        view = make_view(np.zeros((0, 4)))
        with pytest.raises(EmptyLabelSpaceError):
            predict(model, np.ones(4), view)

    def test_dim_mismatch(self):
        model = identity_model(4)
        view = make_view(np.eye(6))
        with pytest.raises(DimMismatchError):
            predict(model, np.ones(4), view)


class TestRestrictionCoherence:
    def test_subspace_scores_equal_full_space_columns(self):
        space = make_space([3, 4, 2])
        model = identity_model(space.dim)
        full = full_view(space)
        rng = np.random.default_rng(4)
        for name in space.dataset_names:
            view = subspace(space, name)
            for _ in range(20):
                raw = rng.normal(size=space.dim)
                full_scores, _ = predict(model, raw, full)
                sub_scores, _ = predict(model, raw, view)
                sel = np.asarray(view.global_indices)
                assert np.max(np.abs(sub_scores - full_scores[sel])) < 1e-7

    def test_subspace_argmax_matches_restricted_full_argmax(self):
        space = make_space([3, 4, 2], seed=5)
        model = identity_model(space.dim)
        full = full_view(space)
        rng = np.random.default_rng(6)
        hit = 0
        for _ in range(100):
            raw = rng.normal(size=space.dim)
            full_scores, full_arg = predict(model, raw, full)
            for name in space.dataset_names:
                view = subspace(space, name)
                sel = list(view.global_indices)
                _, sub_arg = predict(model, raw, view)
                if full_arg in sel:
                    hit += 1
                    assert sel[sub_arg] == full_arg
        assert hit > 0


class TestPredictBatch:
    def shard(self, dim=6, n=10, seed=7):
        rng = np.random.default_rng(seed)
        return [
            SynthInstance(
                image_id=f"img-{i:03d}",
                box=(0.0, 0.0, 10.0, 10.0),
                local_label=int(rng.integers(0, 3)),
                raw_feature=rng.normal(size=dim).astype(np.float32),
            )
            for i in range(n)
        ]

    def test_threshold_zero_keeps_all(self):
        model = identity_model(6)
        view = make_view(l2_normalize_rows(np.random.default_rng(8).normal(size=(3, 6))))
        shard = self.shard()
        dets = predict_batch(model, shard, view, score_threshold=0.0)
        assert len(dets) == len(shard)

    def test_threshold_one_keeps_none(self):
        model = identity_model(6)
        view = make_view(l2_normalize_rows(np.random.default_rng(9).normal(size=(3, 6))))
        dets = predict_batch(model, self.shard(), view, score_threshold=1.0)
        assert dets == []

    def test_detection_scores_in_open_interval(self):
        model = identity_model(6)
        view = make_view(l2_normalize_rows(np.random.default_rng(10).normal(size=(3, 6))))
        for det in predict_batch(model, self.shard(), view):
            assert 0.0 < det.score < 1.0


class TestDetectionIO:
    def test_roundtrip(self, tmp_path):
        view = make_view(np.eye(3))
        dets = [
            Detection(image_id="img-1", box=(0.0, 1.0, 2.0, 3.0), label=2,
                      label_id="l2", score=0.75),
            Detection(image_id="img-2", box=(5.0, 5.0, 9.0, 9.0), label=0,
                      label_id="l0", score=0.25),
        ]
        write_detections(tmp_path / "dets.ndjson", dets)
        loaded = read_detections(tmp_path / "dets.ndjson", view)
        assert [(d.image_id, d.box, d.label, d.score) for d in loaded] == [
            (d.image_id, d.box, d.label, d.score) for d in dets
        ]

    def test_unknown_label_rejected(self, tmp_path):
        view = make_view(np.eye(3))
        write_detections(
            tmp_path / "dets.ndjson",
            [Detection(image_id="i", box=(0, 0, 1, 1), label=0, label_id="zz", score=0.5)],
        )
        with pytest.raises(LabelSpaceMismatchError):
            read_detections(tmp_path / "dets.ndjson", view)

    def test_external_subspace_scoring(self):
        # unseen labels: fresh embeddings drive prediction end to end
        rng = np.random.default_rng(11)
        emb = l2_normalize_rows(rng.normal(size=(4, 6))).astype(np.float32)
        labels = tuple(LabelEntry(id=f"u{i}", display=f"u{i}") for i in range(4))
        view = external_subspace(LabelSet(name="down", labels=labels, dim=6), emb)
        model = identity_model(6)
        scores, arg = predict(model, emb[1].astype(np.float64), view)
        assert arg == 1
