"""Desk-scale scaling and ablation experiments on the synthetic benchmark.

The benchmark pits single-dataset baselines (hard loss only) against
models trained on a growing nested prefix of datasets (K = 1..4, full
loss). Datasets label overlapping concept subsets and live in distinct
domains; two downstream sets probe transfer:

* direct: seen concepts under a novel domain transform, with coverage
  spread so that every additional training dataset covers more of the
  downstream label set;
* zero-shot: concepts held out from all training datasets.

One run of :func:`run_scaling_experiment` trains, per seed, the K
baselines, the K nested multi-dataset models, and a hard-only K_max
model (the ablation arm), then evaluates everything on held-out eval
shards and emits a trend report with per-K means and standard
deviations.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from . import formats
from .alignment import LossConfig
from .evaluate import evaluate
from .infer import predict_batch
from .similarity import build_similarity_matrix
from .space import concat_label_spaces, external_subspace, subspace
from .synth import DatasetSpec, SynthSpec, generate, mild_rotation, split_unseen
from .train import TrainConfig, init_model, train


def default_benchmark_config() -> dict:
    """The pinned 4-dataset benchmark used by the acceptance suite."""
    return {
        "dim": 64,
        "n_prototypes": 48,
        # nested chain with 3-concept overlaps; concepts 39..47 are never
        # trained on (zero-shot pool)
        "datasets": [
            {"name": "a", "subset": list(range(0, 12)), "class_frequency": 0.8},
            {"name": "b", "subset": list(range(9, 21)), "class_frequency": 0.0},
            {"name": "c", "subset": list(range(18, 30)), "class_frequency": 0.0},
            {"name": "d", "subset": list(range(27, 39)), "class_frequency": 0.0},
        ],
        "images_per_dataset": 60,
        "eval_images": 30,
        "transform_strength": 0.15,
        "noise_text": 0.02,
        "noise_feat": 0.05,
        "background_rate": 0.15,
        "downstream_direct": {
            # spread across the coverage tiers so every added training
            # dataset covers roughly three more downstream concepts
            "concepts": [1, 4, 7, 10, 13, 16, 19, 22, 25, 28, 31, 34, 37],
            # several novel domains; direct-transfer accuracy is their
            # mean, smoothing single-domain luck
            "transform_strengths": [0.25, 0.35, 0.45],
            "images": 50,
        },
        "downstream_zeroshot": {
            "concepts": list(range(39, 48)),
            "transform_strength": 0.1,
            "images": 50,
        },
        "loss": {"tau": 0.07, "soft_weight": 10.0, "bce_clamp": 1e-7},
        # steps are a per-dataset budget: a K-dataset run trains K times
        # longer so every dataset sees the same gradient volume its
        # baseline got (multi-dataset schedules grow with K)
        "train": {
            "steps": 600,
            "batch_size": 32,
            "learning_rate": 0.01,
            "optimizer": "adam",
            "rfs_threshold": 0.001,
        },
        "scale_steps_with_k": True,
        "seeds": [0, 1, 2, 3, 4],
    }


def _sub_seed(seed: int, *parts) -> int:
    material = "\x1f".join([str(seed)] + [str(p) for p in parts]).encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:4], "little")


def benchmark_spec(config: dict, seed: int) -> SynthSpec:
    """Materialize the SynthSpec for one seed (transforms are seed-specific)."""
    dim = config["dim"]
    datasets = []
    for ds in config["datasets"]:
        datasets.append(
            DatasetSpec(
                name=ds["name"],
                prototype_subset=tuple(ds["subset"]),
                images=config["images_per_dataset"],
                class_frequency=ds.get("class_frequency", 0.0),
                domain_transform=mild_rotation(
                    dim, config["transform_strength"], seed, ds["name"]
                ),
            )
        )
    return SynthSpec(
        seed=seed,
        n_prototypes=config["n_prototypes"],
        dim=dim,
        datasets=tuple(datasets),
        noise_text=config["noise_text"],
        noise_feat=config["noise_feat"],
        background_rate=config["background_rate"],
    )


def _train_cfg(config: dict, seed: int, run: str, k_datasets: int) -> TrainConfig:
    params = dict(config["train"])
    if config.get("scale_steps_with_k", True):
        params["steps"] = params["steps"] * k_datasets
    return TrainConfig(seed=_sub_seed(seed, run, "sampler"), **params)


def _train_on(
    config: dict,
    seed: int,
    run: str,
    labelsets,
    shards,
    loss_cfg: LossConfig,
):
    space = concat_label_spaces(labelsets)
    sim = build_similarity_matrix(space)
    model = init_model(
        space, raw_dim=config["dim"], cfg=loss_cfg, seed=_sub_seed(seed, run, "init")
    )
    final, report = train(
        model, space, sim, shards, _train_cfg(config, seed, run, len(labelsets))
    )
    return space, final, report


def _eval_on_dataset(model, space, name, eval_shard, config) -> dict:
    view = subspace(space, name)
    dets = predict_batch(model, eval_shard, view)
    report = evaluate(dets, eval_shard, view, dataset=name)
    return {"accuracy": report.accuracy, "map": report.map}


def _eval_downstream(model, labelset, emb, shard, name) -> dict:
    view = external_subspace(labelset, emb)
    dets = predict_batch(model, shard, view)
    report = evaluate(dets, shard, view, dataset=name)
    return {"accuracy": report.accuracy, "map": report.map}


def _downstream(config: dict, spec: SynthSpec, which: str, seed: int, salt="", strength=None):
    ds = config[which]
    if strength is None:
        strength = ds["transform_strength"]
    transform = mild_rotation(spec.dim, strength, seed, which, salt)
    trained = {c for d in spec.datasets for c in d.prototype_subset}
    concepts = list(ds["concepts"])
    holdout = [c for c in concepts if c not in trained]
    seen = [c for c in concepts if c in trained]
    return split_unseen(
        spec,
        holdout,
        include_seen=seen,
        name=which + salt,
        images=ds["images"],
        domain_transform=transform,
    )


def _direct_sets(config: dict, spec: SynthSpec, seed: int) -> list:
    strengths = config["downstream_direct"]["transform_strengths"]
    return [
        _downstream(config, spec, "downstream_direct", seed, salt=f"-{i}", strength=s)
        for i, s in enumerate(strengths)
    ]


def run_seed(config: dict, seed: int) -> dict:
    """Train and evaluate every arm of the experiment for one seed."""
    spec = benchmark_spec(config, seed)
    loss_full = LossConfig(**config["loss"])
    loss_hard = LossConfig(**{**config["loss"], "soft_weight": 0.0})
    labelsets, train_shards, _ = generate(spec, split="train")
    eval_override = {d.name: config["eval_images"] for d in spec.datasets}
    _, eval_shards, _ = generate(spec, split="eval", images_override=eval_override)
    names = [d.name for d in spec.datasets]

    direct_sets = _direct_sets(config, spec, seed)
    zs_ls, zs_emb, zs_shard = _downstream(config, spec, "downstream_zeroshot", seed)

    def eval_direct(model) -> dict:
        per_set = [
            _eval_downstream(model, ls, emb, shard, f"direct-{i}")
            for i, (ls, emb, shard) in enumerate(direct_sets)
        ]
        return {
            "accuracy": float(np.mean([r["accuracy"] for r in per_set])),
            "map": float(np.mean([r["map"] for r in per_set])),
            "per_set": per_set,
        }

    result: dict = {"seed": seed, "baseline": {}, "incremental": {}, "ablation": {}}

    # single-dataset baselines: hard label assignment only
    for k, name in enumerate(names):
        space, model, _ = _train_on(
            config, seed, f"baseline-{name}", [labelsets[k]],
            {name: train_shards[name]}, loss_hard,
        )
        result["baseline"][name] = _eval_on_dataset(
            model, space, name, eval_shards[name], config
        )

    # nested multi-dataset runs with the full loss
    for k in range(1, len(names) + 1):
        space, model, _ = _train_on(
            config, seed, f"multi-K{k}", labelsets[:k],
            {n: train_shards[n] for n in names[:k]}, loss_full,
        )
        row = {
            "per_dataset": {
                n: _eval_on_dataset(model, space, n, eval_shards[n], config)
                for n in names[:k]
            },
            "downstream_direct": eval_direct(model),
            "downstream_zeroshot": _eval_downstream(
                model, zs_ls, zs_emb, zs_shard, "zeroshot"
            ),
        }
        result["incremental"][k] = row

    # ablation arm: K_max datasets, hard loss only
    space, model, _ = _train_on(
        config, seed, "ablation-hard-only", labelsets, train_shards, loss_hard
    )
    result["ablation"]["hard_only_zeroshot"] = _eval_downstream(
        model, zs_ls, zs_emb, zs_shard, "zeroshot"
    )
    result["ablation"]["hard_only_direct"] = eval_direct(model)
    return result


def aggregate(per_seed: list[dict], config: dict) -> dict:
    """Per-K means and standard deviations plus the two trend checks."""
    names = [d["name"] for d in config["datasets"]]
    k_max = len(names)
    per_k: dict = {}
    for k in range(1, k_max + 1):
        direct = [r["incremental"][k]["downstream_direct"]["accuracy"] for r in per_seed]
        zs = [r["incremental"][k]["downstream_zeroshot"]["accuracy"] for r in per_seed]
        accs = [
            np.mean([v["accuracy"] for v in r["incremental"][k]["per_dataset"].values()])
            for r in per_seed
        ]
        maps = [
            np.mean([v["map"] for v in r["incremental"][k]["per_dataset"].values()])
            for r in per_seed
        ]
        per_k[k] = {
            "upstream_accuracy_mean": float(np.mean(accs)),
            "upstream_accuracy_sd": float(np.std(accs)),
            "upstream_map_mean": float(np.mean(maps)),
            "upstream_map_sd": float(np.std(maps)),
            "direct_accuracy_mean": float(np.mean(direct)),
            "direct_accuracy_sd": float(np.std(direct)),
            "zeroshot_accuracy_mean": float(np.mean(zs)),
            "zeroshot_accuracy_sd": float(np.std(zs)),
        }

    # check 1: the K_max model holds every single-dataset baseline's own-
    # dataset accuracy to within one percentage point, in seed means
    multi_vs_baseline = {}
    for name in names:
        base = float(np.mean([r["baseline"][name]["accuracy"] for r in per_seed]))
        multi = float(
            np.mean(
                [r["incremental"][k_max]["per_dataset"][name]["accuracy"] for r in per_seed]
            )
        )
        multi_vs_baseline[name] = {
            "baseline_mean": base,
            "multi_mean": multi,
            "holds": bool(multi >= base - 0.01),
        }

    # check 2: per-seed monotone direct-transfer trend in K
    monotone_seeds = 0
    for r in per_seed:
        seq = [r["incremental"][k]["downstream_direct"]["accuracy"] for k in range(1, k_max + 1)]
        if all(b >= a for a, b in zip(seq, seq[1:])):
            monotone_seeds += 1

    # ablation: soft+hard vs hard-only zero-shot accuracy
    zs_full = [r["incremental"][k_max]["downstream_zeroshot"]["accuracy"] for r in per_seed]
    zs_hard = [r["ablation"]["hard_only_zeroshot"]["accuracy"] for r in per_seed]
    wins = sum(1 for f, h in zip(zs_full, zs_hard) if f >= h)
    ablation = {
        "zeroshot_full_mean": float(np.mean(zs_full)),
        "zeroshot_hard_only_mean": float(np.mean(zs_hard)),
        "effect_size": float(np.mean(zs_full) - np.mean(zs_hard)),
        "seed_wins": int(wins),
        "holds": bool(np.mean(zs_full) >= np.mean(zs_hard)),
    }

    return {
        "per_k": per_k,
        "multi_vs_baseline": multi_vs_baseline,
        "direct_monotone_seeds": monotone_seeds,
        "seeds": [r["seed"] for r in per_seed],
        "ablation": ablation,
    }


def run_scaling_experiment(
    config: dict | None = None, out_dir: Path | str | None = None, progress=None
) -> dict:
    """Run the full experiment across all configured seeds.

    Partial per-seed results are persisted as soon as each seed finishes
    when ``out_dir`` is given.
    """
    config = config or default_benchmark_config()
    out = Path(out_dir) if out_dir is not None else None
    per_seed = []
    for seed in config["seeds"]:
        row = run_seed(config, seed)
        per_seed.append(row)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            formats.write_json(out / f"seed-{seed}.json", row)
        if progress is not None:
            progress(seed, row)
    report = {
        "config": config,
        "per_seed": per_seed,
        "trend": aggregate(per_seed, config),
    }
    if out is not None:
        formats.write_json(out / "report.json", report)
    return report
