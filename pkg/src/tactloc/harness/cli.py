"""Command-line entry point.

Subcommands:
    gen          generate the object pool and datasets
    train-obs    train the observation model, emit the top-k accuracy table
    train-agent  train policies (belief agent or recurrent baseline), 4 seeds
    eval         evaluate a trained policy on the holdout objects
    filter-demo  dump one episode's per-step filter log as JSON

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import nn
from ..agent.rollout import (
    LearnedLikelihood,
    run_agent_episode,
    train_seeds_parallel,
)
from ..env.dataset import build_dataset, load_dataset, save_dataset
from ..env.signatures import generate_objects, split_pool
from ..env.tasks import TaskConfig
from ..exceptions import ConfigurationError, DatasetError, TactlocError
from ..obsmodel import topk_table, train as train_obsmodel
from .config import BASELINE_TPN, ExperimentConfig, load_config
from .manifest import RunManifest, atomic_write_bytes, atomic_write_text, write_csv

AGENT_METRIC_COLUMNS = [
    "update",
    "env_steps",
    "success_rate",
    "mean_episode_length",
    "mean_success_length",
    "mean_success_oracle_steps",
    "rollout_success_rate",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
    "approx_kl",
]


def _write_config_copy(cfg: ExperimentConfig, out: Path) -> None:
    atomic_write_text(out / "config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _objects_for(cfg: ExperimentConfig):
    pool = generate_objects(
        cfg.env.object_count, cfg.env.object_seed, cfg.signature_params(), state_dims=cfg.n
    )
    return split_pool(pool, cfg.env.train_objects)


def _task_config(cfg: ExperimentConfig, objects, task: str | None = None) -> TaskConfig:
    return TaskConfig(
        task=task or cfg.run.task,
        spec=cfg.spec(),
        objects=tuple(objects),
        horizon=cfg.run.horizon,
        noise_sigma=cfg.env.noise_sigma,
    )


def cmd_gen(cfg: ExperimentConfig, out: Path, force: bool) -> int:
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigurationError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    manifest = RunManifest("gen", cfg.config_hash())

    train_objs, holdout_objs = _objects_for(cfg)
    objects_doc = {
        "seed": cfg.env.object_seed,
        "state_dims": cfg.n,
        "params": cfg.signature_params().to_dict(),
        "count": cfg.env.object_count,
        "train_count": cfg.env.train_objects,
    }
    atomic_write_text(out / "objects.json", json.dumps(objects_doc, indent=2, sort_keys=True) + "\n")

    spec = cfg.spec()
    for name, objs, seed in (
        ("train", train_objs, cfg.env.dataset_seed),
        ("holdout", holdout_objs, cfg.env.dataset_seed + 1),
    ):
        ds = build_dataset(
            objs,
            spec,
            samples_per_state=cfg.env.samples_per_state,
            noise_sigma=cfg.env.noise_sigma,
            seed=seed,
            params=cfg.signature_params(),
            include_noiseless=cfg.env.include_noiseless,
        )
        save_dataset(ds, out / f"dataset_{name}.bin", out / f"dataset_{name}.json")
        manifest.record(out / f"dataset_{name}.bin", out)
        manifest.record(out / f"dataset_{name}.json", out)
        print(f"dataset_{name}: {len(ds)} records")

    _write_config_copy(cfg, out)
    manifest.record(out / "objects.json", out)
    manifest.record(out / "config.json", out)
    manifest.wall_clock_seconds = time.monotonic() - started
    manifest.write(out / "manifest_gen.json")
    return 0


def cmd_train_obs(cfg: ExperimentConfig, out: Path, seed: int | None) -> int:
    train_bin = out / "dataset_train.bin"
    if not train_bin.exists():
        raise DatasetError(f"missing dataset {train_bin}; run gen first")
    started = time.monotonic()
    manifest = RunManifest("train-obs", cfg.config_hash())
    train_ds = load_dataset(train_bin, out / "dataset_train.json")
    holdout_ds = load_dataset(out / "dataset_holdout.bin", out / "dataset_holdout.json")
    if (train_ds.spec.n, train_ds.spec.d) != (cfg.n, cfg.d):
        raise ConfigurationError(
            f"dataset was generated for n={train_ds.spec.n}, d={train_ds.spec.d}, "
            f"config says n={cfg.n}, d={cfg.d}"
        )

    obs_cfg = cfg.obs_config()
    obs_seed = cfg.obsmodel.seed if seed is None else seed
    params, history = train_obsmodel(train_ds, obs_cfg, obs_seed)
    for row in history:
        print(
            f"epoch {row['epoch']}: loss={row.get('train_loss', float('nan')):.4f} "
            f"val_top1={row.get('val_top1_mean', float('nan')):.4f}"
        )

    atomic_write_bytes(out / "obsmodel.ckpt", params.to_bytes())
    write_csv(
        out / "obs_training.csv",
        history,
        ["epoch", "train_loss", "val_top1_mean", "saturations"],
    )
    holdout_idx = np.arange(len(holdout_ds))
    rows = topk_table(
        {
            "validation": (params, train_ds, train_ds.val_indices),
            "holdout": (params, holdout_ds, holdout_idx),
        },
        obs_cfg,
    )
    write_csv(out / "topk.csv", rows, ["split", "dimension", "k", "accuracy"])
    for row in rows:
        if row["k"] == 1:
            print(f"{row['split']:>10} {row['dimension']:>12} top-1 {row['accuracy']:.4f}")

    for name in ("obsmodel.ckpt", "obs_training.csv", "topk.csv"):
        manifest.record(out / name, out)
    _write_config_copy(cfg, out)
    manifest.wall_clock_seconds = time.monotonic() - started
    manifest.write(out / "manifest_train_obs.json")
    return 0


def _aggregate_curves(per_seed: list[list[dict]]) -> list[dict]:
    updates = min(len(rows) for rows in per_seed)
    agg = []
    for u in range(updates):
        successes = [rows[u]["success_rate"] for rows in per_seed]
        lengths = [rows[u]["mean_episode_length"] for rows in per_seed]
        agg.append(
            {
                "update": per_seed[0][u]["update"],
                "env_steps": per_seed[0][u]["env_steps"],
                "success_rate_mean": float(np.mean(successes)),
                "success_rate_std": float(np.std(successes)),
                "mean_episode_length_mean": float(np.mean(lengths)),
                "mean_episode_length_std": float(np.std(lengths)),
            }
        )
    return agg


def cmd_train_agent(cfg: ExperimentConfig, out: Path, seeds: tuple[int, ...] | None) -> int:
    started = time.monotonic()
    baseline = cfg.run.baseline
    task_name = cfg.run.task
    manifest = RunManifest(f"train-agent:{baseline}:{task_name}", cfg.config_hash())
    train_objs, holdout_objs = _objects_for(cfg)
    train_task = _task_config(cfg, train_objs)
    eval_task = _task_config(cfg, holdout_objs)
    ppo_cfg = cfg.ppo_config()
    seeds = seeds or cfg.run.seeds

    likelihood = None
    if baseline == BASELINE_TPN:
        ckpt = out / "obsmodel.ckpt"
        if not ckpt.exists():
            raise DatasetError(f"missing observation-model checkpoint {ckpt}; run train-obs first")
        obs_params = nn.ModelParameters.load(ckpt)
        likelihood = LearnedLikelihood(obs_params, cfg.spec(), cfg.obs_config())

    if baseline == BASELINE_TPN:
        kind, net_cfg = "belief", cfg.policy_net_config()
    else:
        kind, net_cfg = "recurrent", cfg.recurrent_net_config()
    results = train_seeds_parallel(kind, train_task, eval_task, likelihood, ppo_cfg, net_cfg, seeds)

    per_seed_rows = []
    for seed, (params, rows) in zip(seeds, results):
        tag = f"{baseline}_{task_name}_seed{seed}"
        last = rows[-1]
        print(
            f"[{tag}] {len(rows)} updates, {last['env_steps']} steps, "
            f"final success {last['success_rate']:.2f} len {last['mean_episode_length']:.2f}"
        )
        atomic_write_bytes(out / f"policy_{tag}.ckpt", params.to_bytes())
        write_csv(out / f"metrics_{tag}.csv", rows, AGENT_METRIC_COLUMNS)
        manifest.record(out / f"policy_{tag}.ckpt", out)
        manifest.record(out / f"metrics_{tag}.csv", out)
        per_seed_rows.append(rows)

    agg = _aggregate_curves(per_seed_rows)
    agg_path = out / f"metrics_{baseline}_{task_name}_mean.csv"
    write_csv(
        agg_path,
        agg,
        [
            "update",
            "env_steps",
            "success_rate_mean",
            "success_rate_std",
            "mean_episode_length_mean",
            "mean_episode_length_std",
        ],
    )
    manifest.record(agg_path, out)
    _write_config_copy(cfg, out)
    manifest.wall_clock_seconds = time.monotonic() - started
    manifest.write(out / f"manifest_train_agent_{baseline}_{task_name}.json")
    return 0


def _load_policy(cfg: ExperimentConfig, out: Path, checkpoint: str | None) -> nn.ModelParameters:
    if checkpoint is not None:
        path = Path(checkpoint)
    else:
        path = out / f"policy_{cfg.run.baseline}_{cfg.run.task}_seed{cfg.run.seeds[0]}.ckpt"
    if not path.exists():
        raise DatasetError(f"missing policy checkpoint {path}")
    return nn.ModelParameters.load(path)


def cmd_eval(cfg: ExperimentConfig, out: Path, checkpoint: str | None) -> int:
    if cfg.run.baseline != BASELINE_TPN:
        raise ConfigurationError("eval reports filter statistics and supports the tpn baseline only")
    started = time.monotonic()
    manifest = RunManifest("eval", cfg.config_hash())
    obs_ckpt = out / "obsmodel.ckpt"
    if not obs_ckpt.exists():
        raise DatasetError(f"missing observation-model checkpoint {obs_ckpt}")
    obs_params = nn.ModelParameters.load(obs_ckpt)
    likelihood = LearnedLikelihood(obs_params, cfg.spec(), cfg.obs_config())
    policy_params = _load_policy(cfg, out, checkpoint)

    _, holdout_objs = _objects_for(cfg)
    task = _task_config(cfg, holdout_objs)
    rng = np.random.default_rng(cfg.run.eval_seed)
    net_cfg = cfg.policy_net_config()

    records = [
        run_agent_episode(
            policy_params, task, likelihood, rng, net_cfg=net_cfg, greedy=cfg.agent.eval_greedy
        )
        for _ in range(cfg.agent.eval_episodes)
    ]
    successes = [r.success for r in records]
    lengths = [r.length for r in records]
    horizon = cfg.run.horizon
    acc = np.full((horizon + 1, cfg.n), np.nan)
    ent = np.full((horizon + 1, cfg.n), np.nan)
    alive = np.zeros(horizon + 1, dtype=int)
    for t in range(horizon + 1):
        at_t = [r for r in records if r.map_correct.shape[0] > t]
        alive[t] = len(at_t)
        if at_t:
            acc[t] = np.mean([r.map_correct[t] for r in at_t], axis=0)
            ent[t] = np.mean([r.entropies[t] for r in at_t], axis=0)

    report = {
        "task": cfg.run.task,
        "episodes": len(records),
        "success_rate": float(np.mean(successes)),
        "mean_episode_length": float(np.mean(lengths)),
        "filter_accuracy_over_time": [[None if np.isnan(v) else float(v) for v in row] for row in acc],
        "entropy_over_time": [[None if np.isnan(v) else float(v) for v in row] for row in ent],
        "episodes_alive": [int(x) for x in alive],
    }
    atomic_write_text(out / "eval_report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    rows = []
    spec = cfg.spec()
    for t in range(horizon + 1):
        for dim in range(cfg.n):
            rows.append(
                {
                    "step": t,
                    "dimension": spec.labels[dim],
                    "map_accuracy": float(acc[t, dim]),
                    "entropy": float(ent[t, dim]),
                    "episodes_alive": int(alive[t]),
                }
            )
    write_csv(out / "eval_series.csv", rows, ["step", "dimension", "map_accuracy", "entropy", "episodes_alive"])
    print(f"success_rate {report['success_rate']:.3f} mean_length {report['mean_episode_length']:.2f}")

    manifest.record(out / "eval_report.json", out)
    manifest.record(out / "eval_series.csv", out)
    manifest.wall_clock_seconds = time.monotonic() - started
    manifest.write(out / "manifest_eval.json")
    return 0


def cmd_filter_demo(cfg: ExperimentConfig, out: Path, checkpoint: str | None) -> int:
    started = time.monotonic()
    manifest = RunManifest("filter-demo", cfg.config_hash())
    obs_ckpt = out / "obsmodel.ckpt"
    if not obs_ckpt.exists():
        raise DatasetError(f"missing observation-model checkpoint {obs_ckpt}")
    obs_params = nn.ModelParameters.load(obs_ckpt)
    likelihood = LearnedLikelihood(obs_params, cfg.spec(), cfg.obs_config())

    _, holdout_objs = _objects_for(cfg)
    task = _task_config(cfg, holdout_objs)
    rng = np.random.default_rng(cfg.run.eval_seed)

    policy_fn = None
    policy_params = None
    net_cfg = None
    if checkpoint is not None:
        policy_params = _load_policy(cfg, out, checkpoint)
        net_cfg = cfg.policy_net_config()
    else:
        from ..belief import DeltaAction

        def policy_fn(bel, goal, rng):
            return DeltaAction(tuple(int(x) for x in rng.integers(-2, 3, size=cfg.n)))

    rec = run_agent_episode(
        policy_params, task, likelihood, rng, net_cfg=net_cfg, policy_fn=policy_fn, record=True
    )
    steps = []
    for t in range(len(rec.beliefs)):
        steps.append(
            {
                "step": t,
                "true_state": list(rec.true_states[t]),
                "action": None if t == 0 else list(rec.actions[t - 1]),
                "reward": None if t == 0 else rec.rewards[t - 1],
                "belief": [[float(v) for v in row] for row in rec.beliefs[t]],
                "likelihood": [[float(v) for v in row] for row in rec.likelihoods[t]],
            }
        )
    doc = {
        "task": cfg.run.task,
        "object_id": rec.object_id,
        "goal": None if rec.goal is None else list(rec.goal),
        "success": rec.success,
        "length": rec.length,
        "filter_resets": rec.filter_resets,
        "steps": steps,
    }
    atomic_write_text(out / "filter_demo.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"episode on object {rec.object_id}: success={rec.success} length={rec.length}")
    manifest.record(out / "filter_demo.json", out)
    manifest.wall_clock_seconds = time.monotonic() - started
    manifest.write(out / "manifest_filter_demo.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tactloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen", "generate object pool and datasets"),
        ("train-obs", "train the observation model"),
        ("train-agent", "train policies over the configured seeds"),
        ("eval", "evaluate a trained policy on holdout objects"),
        ("filter-demo", "dump one episode's belief log"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="JSON config path (defaults built in)")
        p.add_argument("--out", type=str, required=True, help="output/workspace directory")
        p.add_argument("--seed", type=int, default=None, help="override the command's seed(s)")
        p.add_argument("--task", type=str, choices=["active", "reaching"], default=None)
        p.add_argument("--baseline", type=str, choices=["tpn", "recurrent"], default=None)
        if name == "gen":
            p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        if name in ("eval", "filter-demo"):
            p.add_argument("--checkpoint", type=str, default=None, help="policy checkpoint path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.task is not None:
            cfg = replace(cfg, run=replace(cfg.run, task=args.task))
        if args.baseline is not None:
            cfg = replace(cfg, run=replace(cfg.run, baseline=args.baseline))
        if args.seed is not None:
            cfg = replace(
                cfg,
                env=replace(cfg.env, object_seed=args.seed if args.command == "gen" else cfg.env.object_seed),
                obsmodel=replace(cfg.obsmodel, seed=args.seed),
                run=replace(cfg.run, seeds=(args.seed,), eval_seed=args.seed),
            )
        cfg.validate()
        out = Path(args.out)
        if args.command != "gen":
            out.mkdir(parents=True, exist_ok=True)

        if args.command == "gen":
            return cmd_gen(cfg, out, args.force)
        if args.command == "train-obs":
            return cmd_train_obs(cfg, out, args.seed)
        if args.command == "train-agent":
            return cmd_train_agent(cfg, out, (args.seed,) if args.seed is not None else None)
        if args.command == "eval":
            return cmd_eval(cfg, out, args.checkpoint)
        if args.command == "filter-demo":
            return cmd_filter_demo(cfg, out, args.checkpoint)
        raise ConfigurationError(f"unknown command {args.command}")
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TactlocError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
