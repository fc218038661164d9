"""A reduced run of the scaling experiment (2 seeds, shorter training).

Trains single-dataset baselines and nested K=1..4 multi-dataset models,
then reports how upstream accuracy, direct transfer, and zero-shot
transfer move as training datasets are added. The full experiment (the
acceptance configuration with 5 seeds) runs via:

    labelspace-align scaling-experiment --out runs/
"""

from labelspace_align.benchmark import default_benchmark_config, run_scaling_experiment

config = default_benchmark_config()
config["seeds"] = [0, 1]
config["train"]["steps"] = 300

report = run_scaling_experiment(config, progress=lambda seed, row: print(f"seed {seed} done"))

trend = report["trend"]
print(f"\n{'K':>2} {'upstream acc':>13} {'direct':>8} {'zero-shot':>10}")
for k, row in trend["per_k"].items():
    print(
        f"{k:>2} {row['upstream_accuracy_mean']:>8.3f}+-{row['upstream_accuracy_sd']:.3f}"
        f" {row['direct_accuracy_mean']:>8.3f} {row['zeroshot_accuracy_mean']:>10.3f}"
    )

ab = trend["ablation"]
print(f"\nzero-shot, soft+hard vs hard-only: "
      f"{ab['zeroshot_full_mean']:.3f} vs {ab['zeroshot_hard_only_mean']:.3f} "
      f"(effect {ab['effect_size']:+.3f})")
print(f"direct transfer monotone in K for {trend['direct_monotone_seeds']} "
      f"of {len(trend['seeds'])} seeds")
