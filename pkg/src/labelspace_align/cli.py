"""Command-line pipelines over the library.

Commands take a single JSON config document (sections: synth, loss,
train, eval, seeds) plus flags; flags override config. Every run writes
its fully-resolved config and input checksums next to its outputs, and
config-driven commands nest their artifacts under a directory named by
the config hash, so identical config + seed reruns overwrite their own
artifacts with byte-identical content.

Exit codes: 0 ok, 1 invariant/assertion failure, 2 usage/config error,
3 I/O failure. Errors print one line: ``error: <kind>: <detail>``.

``LABELSPACE_ALIGN_THREADS`` caps worker parallelism; every command
currently runs in the sequential-deterministic mode (0), which any cap
satisfies. The value is validated and recorded in run provenance.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import benchmark, formats
from .alignment import LossConfig
from .errors import ChecksumMismatchError, LabelAlignError, MissingFileError
from .evaluate import evaluate
from .infer import predict_batch, read_detections, write_detections
from .similarity import build_similarity_matrix, save_similarity_matrix
from .space import (
    concat_label_spaces,
    external_subspace,
    full_view,
    load_unified,
    save_unified,
    subspace,
)
from .store import labelset_checksum, load_labelset, save_labelset
from .synth import DatasetSpec, SynthSpec, generate, read_shard, spec_hash, write_shard
from .train import TrainConfig, init_model, load_checkpoint, train

_SYNTH_KEYS = {
    "seed", "n_prototypes", "dim", "datasets", "noise_text", "noise_feat",
    "background_rate", "canvas", "min_boxes", "max_boxes",
}
_DATASET_KEYS = {"name", "prototype_subset", "images", "class_frequency",
                 "domain_transform", "transform_strength"}
_LOSS_KEYS = {"tau", "soft_weight", "bce_clamp"}
_TRAIN_KEYS = {"steps", "batch_size", "learning_rate", "optimizer", "adam_beta1",
               "adam_beta2", "adam_eps", "rfs_threshold", "seed", "checkpoint_every"}
_EVAL_KEYS = {"eval_images", "score_threshold", "map50_only", "tau"}
_TOP_KEYS = {"synth", "loss", "train", "eval", "seeds"}


class UsageError(Exception):
    pass


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    for key in d:
        if key not in allowed:
            raise UsageError(f"unknown config key {key!r} in {where}")


def _load_config(path: str) -> tuple[dict, Path]:
    cfg_path = Path(path)
    if not cfg_path.is_file():
        raise MissingFileError(f"no such config file: {cfg_path}")
    cfg = formats.read_json(cfg_path)
    _reject_unknown(cfg, _TOP_KEYS, "top level")
    for section, allowed in (
        ("synth", _SYNTH_KEYS), ("loss", _LOSS_KEYS),
        ("train", _TRAIN_KEYS), ("eval", _EVAL_KEYS),
    ):
        if section in cfg:
            _reject_unknown(cfg[section], allowed, f"section {section!r}")
    if "synth" in cfg:
        for ds in cfg["synth"].get("datasets", []):
            _reject_unknown(ds, _DATASET_KEYS, f"dataset {ds.get('name', '?')!r}")
    return cfg, cfg_path.parent.resolve()


def _threads() -> int:
    raw = os.environ.get("LABELSPACE_ALIGN_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"LABELSPACE_ALIGN_THREADS must be an integer, got {raw!r}")
    if value < 0:
        raise UsageError("LABELSPACE_ALIGN_THREADS must be >= 0")
    return value


def _config_hash(cfg: dict) -> str:
    return formats.sha256_bytes(formats.canonical_json(cfg).encode())[:12]


def _provenance(out: Path, cfg: dict, inputs: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    formats.write_json(out / "config.json", cfg)
    formats.write_json(
        out / "inputs.json",
        {"checksums": inputs, "threads": _threads()},
    )


def _synth_spec(cfg: dict) -> SynthSpec:
    synth = dict(cfg["synth"])
    datasets = []
    for ds in synth.pop("datasets"):
        ds = dict(ds)
        strength = ds.pop("transform_strength", None)
        transform = ds.pop("domain_transform", None)
        if transform is not None:
            transform = np.asarray(transform, dtype=np.float64)
        elif strength:
            from .synth import mild_rotation

            transform = mild_rotation(synth["dim"], strength, synth["seed"], ds["name"])
        datasets.append(DatasetSpec(domain_transform=transform, **ds))
    return SynthSpec(datasets=tuple(datasets), **synth)


# ---------------------------------------------------------------------------
# commands


def cmd_build_unified(args) -> int:
    sets = [load_labelset(Path(p)) for p in args.labelsets]
    space = concat_label_spaces(sets)
    out = Path(args.out)
    save_unified(space, out)
    _provenance(
        out,
        {"labelsets": [str(Path(p)) for p in args.labelsets]},
        {
            str(Path(p)): labelset_checksum(ls, emb)
            for p, (ls, emb) in zip(args.labelsets, sets)
        },
    )
    print(f"n={space.n}")
    off = 0
    for name, count in space.sources:
        print(f"{name}: offset={off} count={count}")
        off += count
    return 0


def cmd_simmatrix(args) -> int:
    space = load_unified(Path(args.unified))
    sim = build_similarity_matrix(space)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_similarity_matrix(sim, out)
    print(f"n={sim.n} epsilon_rows={len(sim.epsilon_rows)}")
    print(f"checksum={formats.sha256_file(out)}")
    return 0


def cmd_synth(args) -> int:
    cfg, _ = _load_config(args.config)
    if "synth" not in cfg:
        raise UsageError("config needs a 'synth' section")
    spec = _synth_spec(cfg)
    run_dir = Path(args.out) / _config_hash(cfg)
    labelsets, shards, _ = generate(spec, split="train")
    eval_images = int(cfg.get("eval", {}).get("eval_images", 0))
    h = spec_hash(spec)
    (run_dir / "labelsets").mkdir(parents=True, exist_ok=True)
    (run_dir / "shards").mkdir(parents=True, exist_ok=True)
    for (labelset, emb), name in zip(labelsets, shards):
        save_labelset(labelset, emb, run_dir / "labelsets" / name)
        write_shard(
            run_dir / "shards" / f"{name}.train.ndjson",
            shards[name], dataset=name, corpus_hash=h, split="train",
        )
    if eval_images > 0:
        override = {name: eval_images for name in shards}
        _, eval_shards, _ = generate(spec, split="eval", images_override=override)
        for name, instances in eval_shards.items():
            write_shard(
                run_dir / "shards" / f"{name}.eval.ndjson",
                instances, dataset=name, corpus_hash=h, split="eval",
            )
    _provenance(run_dir, cfg, {"spec_hash": h})
    print(f"out={run_dir}")
    return 0


def cmd_train(args) -> int:
    cfg, _ = _load_config(args.config)
    for needed in ("synth", "train"):
        if needed not in cfg:
            raise UsageError(f"config needs a {needed!r} section")
    data = Path(args.data)
    names = [ds["name"] for ds in cfg["synth"]["datasets"]]
    if args.datasets:
        wanted = args.datasets.split(",")
        for w in wanted:
            if w not in names:
                raise UsageError(f"--datasets names unknown dataset {w!r}")
        names = [n for n in names if n in wanted]
    resolved = dict(cfg)
    resolved["_datasets_subset"] = names
    run_dir = Path(args.out) / _config_hash(resolved)

    sets = [load_labelset(data / "labelsets" / name) for name in names]
    shards = {}
    input_sums = {}
    for name in names:
        shard_path = data / "shards" / f"{name}.train.ndjson"
        if not shard_path.is_file():
            raise MissingFileError(f"no shard {shard_path}")
        _, shards[name] = read_shard(shard_path)
        # keyed by stable relative names so identical configs produce
        # identical provenance regardless of where inputs live
        input_sums[f"shards/{name}.train.ndjson"] = formats.sha256_file(shard_path)
        input_sums[f"labelsets/{name}"] = labelset_checksum(*sets[names.index(name)])

    space = concat_label_spaces(sets)
    sim = build_similarity_matrix(space)
    save_unified(space, run_dir / "unified")
    save_similarity_matrix(sim, run_dir / "simmatrix.bin")

    loss_cfg = LossConfig(**cfg.get("loss", {}))
    train_cfg = TrainConfig(**cfg["train"])
    raw_dim = sets[0][1].shape[1]
    model = init_model(space, raw_dim=raw_dim, cfg=loss_cfg, seed=train_cfg.seed)
    final, report = train(
        model, space, sim, shards, train_cfg,
        log_path=run_dir / "train_log.ndjson",
        checkpoint_dir=run_dir,
    )
    _provenance(run_dir, resolved, input_sums)
    formats.write_json(
        run_dir / "report.json",
        {
            "per_dataset_accuracy": report.per_dataset_accuracy,
            "final_loss": float(report.total[-1]),
            "initial_loss": float(report.total[0]),
            "config": report.config,
        },
    )
    print(f"out={run_dir}")
    print(f"final_loss={report.total[-1]:.6f}")
    for name, acc in report.per_dataset_accuracy.items():
        print(f"train_accuracy[{name}]={acc:.4f}")
    print(f"wall_clock={report.wall_clock:.2f}s", file=sys.stderr)
    return 0


def _resolve_target(spec_str: str, ckpt_checksum: str, override: bool):
    kind, _, rest = spec_str.partition(":")
    if kind == "unified" or kind == "subspace":
        dir_part, _, ds_name = rest.partition("::")
        space = load_unified(Path(dir_part))
        if space.checksum != ckpt_checksum and not override:
            raise ChecksumMismatchError(
                "target label space differs from the checkpoint's; pass "
                "--override-space to swap label spaces deliberately"
            )
        if kind == "unified":
            return full_view(space)
        if not ds_name:
            raise UsageError("subspace target needs the form subspace:DIR::NAME")
        return subspace(space, ds_name)
    if kind == "external":
        labels, emb = load_labelset(Path(rest))
        if not override:
            raise ChecksumMismatchError(
                "external label spaces always need --override-space "
                "(label-space swapping changes the label set, not the projector)"
            )
        return external_subspace(labels, emb)
    raise UsageError(
        f"bad --target {spec_str!r}: expected unified:DIR, subspace:DIR::NAME "
        "or external:DIR"
    )


def cmd_infer(args) -> int:
    model = load_checkpoint(Path(args.ckpt))
    target = _resolve_target(args.target, model.space_checksum, args.override_space)
    _, shard = read_shard(Path(args.shard))
    dets = predict_batch(
        model, shard, target,
        tau=args.tau, score_threshold=args.threshold,
    )
    write_detections(Path(args.out), dets)
    print(f"detections={len(dets)}")
    return 0


def cmd_eval(args) -> int:
    model_sum = ""
    if args.ckpt:
        model_sum = load_checkpoint(Path(args.ckpt)).space_checksum
    target = _resolve_target(args.target, model_sum, override=True)
    _, shard = read_shard(Path(args.shard))
    dets = read_detections(Path(args.dets), target)
    report = evaluate(
        dets, shard, target,
        map50_only=args.map50_only,
        dataset=target.source,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    formats.write_json(out, report.to_dict())
    print(report.format_table())
    return 0


def cmd_scaling_experiment(args) -> int:
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise MissingFileError(f"no such config file: {cfg_path}")
        cfg = formats.read_json(cfg_path)
        _reject_unknown(cfg, set(benchmark.default_benchmark_config()), "scaling config")
        merged = {**benchmark.default_benchmark_config(), **cfg}
    else:
        merged = benchmark.default_benchmark_config()
    run_dir = Path(args.out) / _config_hash(merged)

    def progress(seed, row):
        print(f"seed {seed} done", file=sys.stderr)

    report = benchmark.run_scaling_experiment(merged, out_dir=run_dir, progress=progress)
    _provenance(run_dir, merged, {})
    trend = report["trend"]
    print(f"out={run_dir}")
    print(f"{'K':>2} {'up_acc':>8} {'up_map':>8} {'direct':>8} {'zeroshot':>9}")
    for k, row in trend["per_k"].items():
        print(
            f"{k:>2} {row['upstream_accuracy_mean']:>8.4f} {row['upstream_map_mean']:>8.4f} "
            f"{row['direct_accuracy_mean']:>8.4f} {row['zeroshot_accuracy_mean']:>9.4f}"
        )
    baseline_ok = all(v["holds"] for v in trend["multi_vs_baseline"].values())
    monotone_ok = trend["direct_monotone_seeds"] >= max(1, len(trend["seeds"]) - 1)
    ablation_ok = trend["ablation"]["holds"]
    print(f"baseline_check={'pass' if baseline_ok else 'FAIL'}")
    print(f"direct_monotone_seeds={trend['direct_monotone_seeds']}/{len(trend['seeds'])}")
    print(f"ablation_check={'pass' if ablation_ok else 'FAIL'} "
          f"(effect {trend['ablation']['effect_size']:+.4f})")
    return 0 if (baseline_ok and monotone_ok and ablation_ok) else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelspace-align",
        description="Multi-dataset training pipelines over a unified "
        "text-embedding label space",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-unified", help="concatenate label sets into a unified space")
    p.add_argument("--labelsets", nargs="+", required=True, metavar="DIR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_unified)

    p = sub.add_parser("simmatrix", help="compute the offline label similarity matrix")
    p.add_argument("--unified", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="FILE")
    p.set_defaults(func=cmd_simmatrix)

    p = sub.add_parser("synth", help="generate a synthetic multi-dataset corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the projection head across datasets")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="a synth output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--datasets", default="", help="comma-separated subset of datasets")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="score a shard against any label space")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--shard", required=True)
    p.add_argument("--target", required=True,
                   help="unified:DIR | subspace:DIR::NAME | external:DIR")
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--override-space", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate detections against a shard")
    p.add_argument("--dets", required=True)
    p.add_argument("--shard", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--ckpt", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--map50-only", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "scaling-experiment",
        help="train K=1..K_max nested runs over several seeds and report trends",
    )
    p.add_argument("--config", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scaling_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _threads()  # validate early
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except MissingFileError as exc:
        print(f"error: missing-input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    except LabelAlignError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
