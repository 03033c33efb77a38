"""Command-line entry point.

Subcommands: meta-train, train-classifier, train-baselines, run-cola,
compare, ablate-filter, sweep-k. Exit code 0 on success, 1 on any error
contract violation (with a diagnostic on stderr), 2 on bad usage.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

from colalab import harness
from colalab.config import ExperimentConfig, load_config


def _common_flags(sub):
    sub.add_argument("--config", help="JSON config file of overrides")
    sub.add_argument("--seed-list", help="comma-separated seeds, e.g. 0,1,2")
    sub.add_argument("--out-dir", help="artifact/output directory")
    sub.add_argument("--episodes", type=int, help="episodes per seed")
    sub.add_argument("--workers", type=int, help="parallel episode workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colalab",
        description="Train, adapt, and evaluate lane-keeping policies in a hidden-mode weather world.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, description in [
        ("meta-train", "train the meta policy across anchor modes and collect trajectory banks"),
        ("train-classifier", "fit the mode likelihood model from dynamic-schedule rollouts"),
        ("train-baselines", "train the dynamic base policy and per-mode Q tables"),
        ("run-cola", "run the online adaptive policy and write step logs"),
        ("compare", "evaluate all five policies on shared seeds with regret reports"),
        ("ablate-filter", "compare Bayes-filtered vs raw classifier beliefs"),
        ("sweep-k", "sweep the lookahead horizon over three weather conditions"),
    ]:
        s = sub.add_parser(name, help=description)
        _common_flags(s)
        if name == "sweep-k":
            s.add_argument("--ks", help="comma-separated lookahead horizons, e.g. 5,10,20")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.seed_list:
        updates["seeds"] = [int(s) for s in args.seed_list.split(",") if s != ""]
    if args.out_dir:
        updates["out_dir"] = args.out_dir
    if args.episodes is not None:
        updates["episodes_per_seed"] = args.episodes
    if args.workers is not None:
        updates["workers"] = args.workers
    return dataclasses.replace(cfg, **updates) if updates else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "meta-train":
            report = harness.train_meta_artifacts(cfg)
            print(f"meta policy trained: {len(report.iteration_rewards)} iterations, "
                  f"final mean reward {report.iteration_rewards[-1]:.2f}")
            print(f"artifacts in {cfg.meta_dir()}")
        elif args.command == "train-classifier":
            model = harness.train_classifier_artifact(cfg)
            print(f"classifier trained, held-out accuracy {model.holdout_accuracy:.3f}")
            print(f"saved to {cfg.classifier_path()}")
        elif args.command == "train-baselines":
            base_theta, tables = harness.train_baseline_artifacts(cfg)
            flagged = [f"{t.unvisited_fraction:.1%}" for t in tables]
            print(f"base policy and {len(tables)} Q tables trained "
                  f"(unvisited bucket fractions: {', '.join(flagged)})")
        elif args.command == "run-cola":
            summary = harness.run_cola_only(cfg)
            print(f"cola: mean reward {summary['cola']['mean_reward']:.2f} "
                  f"over {summary['cola']['episodes']} episodes")
        elif args.command == "compare":
            summary = harness.run_comparison(cfg)
            for name in harness.POLICY_NAMES:
                e = summary[name]
                print(f"{name:7s} mean {e['mean_reward']:9.2f}  "
                      f"ci [{e['ci_lo']:.2f}, {e['ci_hi']:.2f}]  {e['verdict']}")
            duel = summary.get("cola_vs_qmix")
            if duel:
                print(f"cola - qmix mean diff {duel['mean_diff']:.2f} "
                      f"(5th pct {duel['diff_p5']:.2f})")
        elif args.command == "ablate-filter":
            result = harness.ablate_filter(cfg)
            print(f"episodic accuracy: filter {result['episodic_filter']:.4f} "
                  f"vs vanilla {result['episodic_vanilla']:.4f}")
            print(f"mean reward: filter {result['mean_reward_filter']:.2f} "
                  f"vs vanilla {result['mean_reward_vanilla']:.2f}")
        elif args.command == "sweep-k":
            ks = [int(k) for k in args.ks.split(",")] if getattr(args, "ks", None) else None
            for row in harness.sweep_lookahead(cfg, ks):
                print(f"K={row['K']:3d} {row['condition']:8s} "
                      f"mean {row['mean_reward']:9.2f} +- {row['std_reward']:.2f}")
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
