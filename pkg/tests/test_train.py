"""Trainer: repeat factors, optimizers, the training loop, checkpoints."""

import json

import numpy as np
import pytest

from labelspace_align.alignment import LossConfig
from labelspace_align.errors import ChecksumMismatchError, EmptyCorpusError
from labelspace_align.similarity import SimilarityMatrix, build_similarity_matrix
from labelspace_align.space import concat_label_spaces
from labelspace_align.synth import DatasetSpec, SynthSpec, generate
from labelspace_align.train import (
    AdamState,
    TrainConfig,
    init_model,
    load_checkpoint,
    repeat_factors,
    save_checkpoint,
    sgd_step,
    train,
)


def brute_repeat_factors(per_image_classes, t):
    """Independent oracle: dict-free, loop-based reimplementation."""
    n = len(per_image_classes)
    all_classes = sorted({c for classes in per_image_classes for c in classes})
    out = []
    for classes in per_image_classes:
        best = 1.0
        for c in classes:
            f = sum(1 for other in per_image_classes if c in other) / n
            rc = max(1.0, (t / f) ** 0.5)
            best = max(best, rc)
        out.append(best)
    return np.array(out)


def separable_setup(seed=0):
    spec = SynthSpec(
        seed=seed,
        n_prototypes=5,
        dim=8,
        datasets=(
            DatasetSpec(name="a", prototype_subset=(0, 1, 2), images=12),
            DatasetSpec(name="b", prototype_subset=(2, 3, 4), images=12),
        ),
        noise_feat=0.0,
        noise_text=0.0,
        background_rate=0.1,
    )
    labelsets, shards, _ = generate(spec)
    space = concat_label_spaces(labelsets)
    sim = build_similarity_matrix(space)
    return space, sim, shards


class TestRepeatFactors:
    def test_frequent_classes_all_equal(self):
        images = [{0}, {0, 1}, {1}, {0}]  # every f(c) >= t
        w = repeat_factors(images, t=0.001)
        np.testing.assert_array_equal(w, np.ones(4))

    def test_sqrt_ten_fixture(self):
        # one class in 1 of 10000 images at t=0.001: factor sqrt(10)
        images = [{0}] + [{1}] * 9999
        w = repeat_factors(images, t=0.001)
        assert round(w[0], 4) == 3.1623
        assert w[1] == 1.0

    def test_background_only_images_get_unit_weight(self):
        w = repeat_factors([set(), {0}], t=0.5)
        assert w[0] == 1.0

    def test_random_corpora_vs_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            n_images = int(rng.integers(3, 40))
            n_classes = int(rng.integers(1, 8))
            images = [
                set(
                    rng.choice(
                        n_classes,
                        size=rng.integers(0, min(4, n_classes + 1)),
                        replace=False,
                    ).tolist()
                )
                for _ in range(n_images)
            ]
            t = float(rng.uniform(0.01, 1.0))
            np.testing.assert_array_equal(
                repeat_factors(images, t), brute_repeat_factors(images, t)
            )

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            repeat_factors([], t=0.5)


class TestOptimizers:
    def test_sgd_step_is_exactly_minus_lr_grad(self):
        # quadratic objective f(p) = 0.5 * p' p has gradient p
        p = np.array([1.5, -2.0, 0.25])
        lr = 0.1
        stepped = sgd_step(p, p, lr)
        np.testing.assert_array_equal(stepped, p - lr * p)

    def test_adam_first_step_magnitude(self):
        st = AdamState((2,), beta1=0.9, beta2=0.999, eps=1e-8)
        p = np.zeros(2)
        g = np.array([3.0, -7.0])
        out = st.step(p, g, lr=0.01)
        # bias-corrected first step is about -lr * sign(g)
        np.testing.assert_allclose(out, [-0.01, 0.01], rtol=1e-6)


class TestTrainingLoop:
    def test_separable_corpus_reaches_full_accuracy(self):
        space, sim, shards = separable_setup()
        cfg = TrainConfig(steps=2000, batch_size=16, learning_rate=0.01, seed=1)
        model = init_model(space, raw_dim=8, cfg=LossConfig(), seed=1)
        final, report = train(model, space, sim, shards, cfg)
        for name, acc in report.per_dataset_accuracy.items():
            assert acc == 1.0, f"{name}: {acc}"
        assert report.total[-50:].mean() < report.total[:50].mean()

    def test_zero_weight_equals_hard_only_bitwise(self):
        space, sim, shards = separable_setup()
        cfg = TrainConfig(steps=120, batch_size=8, seed=5)
        loss_cfg = LossConfig(soft_weight=0.0)
        m1, r1 = train(init_model(space, 8, loss_cfg, seed=2), space, sim, shards, cfg)
        m2, r2 = train(init_model(space, 8, loss_cfg, seed=2), space, sim, shards, cfg)
        assert r1.total.tobytes() == r2.total.tobytes()
        assert r1.hard.tobytes() == r2.hard.tobytes()
        assert np.all(r1.soft == 0.0)
        assert np.array_equal(r1.total, r1.hard)
        assert m1.W.tobytes() == m2.W.tobytes()

    def test_fixed_seed_bitwise_identical_weights(self):
        space, sim, shards = separable_setup()
        cfg = TrainConfig(steps=80, batch_size=8, seed=9)
        runs = []
        for _ in range(2):
            model = init_model(space, 8, LossConfig(), seed=3)
            final, _ = train(model, space, sim, shards, cfg)
            runs.append(final)
        assert runs[0].W.tobytes() == runs[1].W.tobytes()
        assert runs[0].b.tobytes() == runs[1].b.tobytes()

    def test_windowed_loss_nonincreasing_on_separable_fixture(self):
        space, sim, shards = separable_setup()
        cfg = TrainConfig(steps=600, batch_size=16, learning_rate=0.01, seed=4)
        model = init_model(space, 8, LossConfig(), seed=4)
        _, report = train(model, space, sim, shards, cfg)
        windows = report.total.reshape(3, 200).mean(axis=1)
        assert np.all(np.diff(windows) <= 1e-9)
        assert report.total[-1] < report.total[0]

    def test_checksum_mismatch_rejected(self):
        space, sim, shards = separable_setup(seed=0)
        other_space, *_ = separable_setup(seed=99)
        sim_other = build_similarity_matrix(other_space)
        cfg = TrainConfig(steps=5, batch_size=4)
        model = init_model(space, 8, LossConfig(), seed=0)
        with pytest.raises(ChecksumMismatchError):
            train(model, space, sim_other, shards, cfg)

    def test_training_log_written(self, tmp_path):
        space, sim, shards = separable_setup()
        cfg = TrainConfig(steps=10, batch_size=4, seed=0)
        model = init_model(space, 8, LossConfig(), seed=0)
        train(model, space, sim, shards, cfg, log_path=tmp_path / "log.ndjson")
        lines = (tmp_path / "log.ndjson").read_text().splitlines()
        assert len(lines) == 10
        rec = json.loads(lines[0])
        assert set(rec) == {"step", "hard", "soft", "total", "lr"}


class TestCheckpoints:
    def test_roundtrip_byte_identical(self, tmp_path):
        space, sim, shards = separable_setup()
        model = init_model(space, 8, LossConfig(), seed=0)
        save_checkpoint(model, tmp_path / "ck")
        loaded = load_checkpoint(tmp_path / "ck")
        assert loaded.W.tobytes() == model.W.tobytes()
        assert loaded.b.tobytes() == model.b.tobytes()
        assert loaded.cfg == model.cfg
        assert loaded.space_checksum == model.space_checksum

    def test_space_mismatch_requires_override(self, tmp_path):
        space, sim, shards = separable_setup()
        model = init_model(space, 8, LossConfig(), seed=0)
        save_checkpoint(model, tmp_path / "ck")
        with pytest.raises(ChecksumMismatchError):
            load_checkpoint(tmp_path / "ck", space_checksum="different")
        loaded = load_checkpoint(tmp_path / "ck", space_checksum="different", override=True)
        assert loaded.W.tobytes() == model.W.tobytes()

    def test_moments_persisted_after_training(self, tmp_path):
        space, sim, shards = separable_setup()
        cfg = TrainConfig(steps=5, batch_size=4, optimizer="adam")
        model = init_model(space, 8, LossConfig(), seed=0)
        final, _ = train(model, space, sim, shards, cfg, checkpoint_dir=tmp_path)
        meta = json.loads((tmp_path / "final" / "ckpt.json").read_text())
        meta_names = [name for name, _ in meta["payload"]]
        assert meta_names == ["W", "b", "adam_m_W", "adam_v_W", "adam_m_b", "adam_v_b"]
        loaded = load_checkpoint(tmp_path / "final")
        assert loaded.W.tobytes() == final.W.tobytes()
