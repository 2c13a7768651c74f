"""Command-line entry points for running and inspecting experiments.

Subcommands:
  simulate       full pipeline: dictionary training, zero-shot testing,
                 flight-controller training; writes CSVs + manifest
  train-dicts    stage one only; writes a dictionary checkpoint
  test-zeroshot  zero-shot evaluation from a checkpoint
  train-flight   flight-controller training from a checkpoint
  sweep          grid over one hyperparameter, one run directory per value
  plot           turn episodes.csv files into SVG charts

Every run directory gets a manifest (config, seed, git revision, metric
summary) so results can be reproduced from the artifact alone.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import lifelong
from .configio import ConfigError, apply_overrides, load_config
from .harness import ExperimentConfig, run_flight_training, run_testing, run_training
from .metrics import (write_devices_csv, write_episodes_csv, write_flights_csv,
                      write_summary_json)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def _write_manifest(outdir: Path, config: ExperimentConfig, summaries: dict) -> None:
    manifest = {
        "config": config.to_dict(),
        "master_seed": config.master_seed,
        "git_describe": _git_describe(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "summary": summaries,
    }
    write_summary_json(outdir / "manifest.json", manifest)


def _prepare_outdir(path_str: str) -> Path:
    outdir = Path(path_str)
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    return apply_overrides(
        config,
        master_seed=args.seed,
        controller=getattr(args, "controller", None),
        episodes=getattr(args, "episodes", None),
    )


def cmd_simulate(args) -> int:
    config = _load(args)
    outdir = _prepare_outdir(args.out)
    dicts, train_metrics = run_training(config)
    runs = [train_metrics]
    summaries = {"train": train_metrics.summary()}
    if config.pipeline == "lifelong" and dicts.env_count >= 1:
        lifelong.save_checkpoint(dicts, outdir / "dicts.json")
        test_metrics = run_testing(config, dicts)
        runs.append(test_metrics)
        summaries["test"] = test_metrics.summary()
        _, flight_metrics = run_flight_training(config, dicts)
        runs.append(flight_metrics)
        summaries["flight"] = flight_metrics.summary()
    write_devices_csv(outdir / "devices.csv", runs)
    write_flights_csv(outdir / "flights.csv", runs)
    write_episodes_csv(outdir / "episodes.csv", runs)
    write_summary_json(outdir / "summary.json", summaries)
    _write_manifest(outdir, config, summaries)
    print(f"simulate: wrote {outdir}")
    return 0


def cmd_train_dicts(args) -> int:
    config = _load(args)
    outdir = _prepare_outdir(args.out)
    dicts, metrics = run_training(config)
    if dicts.env_count < 1:
        print("train-dicts: no environments absorbed; nothing to checkpoint",
              file=sys.stderr)
        return 1
    lifelong.save_checkpoint(dicts, outdir / "dicts.json")
    write_devices_csv(outdir / "devices.csv", metrics)
    write_flights_csv(outdir / "flights.csv", metrics)
    write_episodes_csv(outdir / "episodes.csv", metrics)
    summaries = {"train": metrics.summary()}
    write_summary_json(outdir / "summary.json", summaries)
    _write_manifest(outdir, config, summaries)
    print(f"train-dicts: wrote {outdir}")
    return 0


def _load_dicts(path_str: str):
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"dictionary checkpoint not found: {path}")
    return lifelong.load_checkpoint(path)


def cmd_test_zeroshot(args) -> int:
    config = _load(args)
    outdir = _prepare_outdir(args.out)
    dicts = _load_dicts(args.dicts)
    metrics = run_testing(config, dicts)
    write_devices_csv(outdir / "devices.csv", metrics)
    write_flights_csv(outdir / "flights.csv", metrics)
    write_episodes_csv(outdir / "episodes.csv", metrics)
    summaries = {"test": metrics.summary()}
    write_summary_json(outdir / "summary.json", summaries)
    _write_manifest(outdir, config, summaries)
    print(f"test-zeroshot: wrote {outdir}")
    return 0


def cmd_train_flight(args) -> int:
    config = _load(args)
    outdir = _prepare_outdir(args.out)
    dicts = _load_dicts(args.dicts)
    _, metrics = run_flight_training(config, dicts)
    write_devices_csv(outdir / "devices.csv", metrics)
    write_flights_csv(outdir / "flights.csv", metrics)
    write_episodes_csv(outdir / "episodes.csv", metrics)
    summaries = {"flight": metrics.summary()}
    write_summary_json(outdir / "summary.json", summaries)
    _write_manifest(outdir, config, summaries)
    print(f"train-flight: wrote {outdir}")
    return 0


def _sweep_value(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _run_sweep_point(payload) -> dict:
    config_path, out, param, value, index = payload
    config = load_config(config_path)
    if not hasattr(config, param):
        raise ConfigError(f"unknown sweep parameter {param!r}")
    config = apply_overrides(config, **{param: value},
                             master_seed=config.master_seed + index)
    outdir = _prepare_outdir(out)
    dicts, metrics = run_training(config)
    summaries = {"train": metrics.summary()}
    if config.pipeline == "lifelong" and dicts.env_count >= 1:
        test_metrics = run_testing(config, dicts)
        summaries["test"] = test_metrics.summary()
    write_episodes_csv(outdir / "episodes.csv", metrics)
    write_summary_json(outdir / "summary.json", summaries)
    _write_manifest(outdir, config, summaries)
    key = summaries.get("test", summaries["train"])
    return {"param": param, "value": value, "out": str(outdir),
            "mean_cost": key["mean_cost"], "objective": key["objective"]}


def cmd_sweep(args) -> int:
    values = [_sweep_value(v) for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("sweep needs at least one value")
    outroot = _prepare_outdir(args.out)
    payloads = [
        (args.config, str(outroot / f"{args.param}={value}"), args.param, value, i)
        for i, value in enumerate(values)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_sweep_point, payloads))
    else:
        rows = [_run_sweep_point(p) for p in payloads]
    write_summary_json(outroot / "sweep.json", {"points": rows})
    for row in rows:
        print(f"{row['param']}={row['value']}: mean_cost={row['mean_cost']:.4f} "
              f"objective={row['objective']:.4f}")
    return 0


def cmd_plot(args) -> int:
    import csv as csv_mod

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = _prepare_outdir(args.out)
    series = []
    for run_dir in args.runs:
        path = Path(run_dir) / "episodes.csv"
        if not path.exists():
            raise ConfigError(f"missing episodes.csv under {run_dir}")
        label = Path(run_dir).name
        manifest = Path(run_dir) / "manifest.json"
        if manifest.exists():
            with open(manifest) as fh:
                label = json.load(fh).get("config", {}).get("controller", label)
        with open(path) as fh:
            rows = list(csv_mod.DictReader(fh))
        series.append((label, rows))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, rows in series:
        rewards = [float(r["mean_reward"]) for r in rows]
        ax.plot(range(len(rewards)), rewards, marker="o", label=label)
    ax.set_xlabel("episode")
    ax.set_ylabel("mean device reward")
    ax.legend()
    ax.grid(True, alpha=0.4)
    reward_path = outdir / "reward_curves.svg"
    fig.savefig(reward_path, format="svg", metadata={"Date": None})
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    labels = [label for label, _ in series]
    energies = [sum(float(r["total_uav_energy"]) for r in rows) / 1e3
                for _, rows in series]
    ax.bar(labels, energies)
    ax.set_ylabel("total UAV energy (kJ)")
    energy_path = outdir / "uav_energy.svg"
    fig.savefig(energy_path, format="svg", metadata={"Date": None})
    plt.close(fig)

    print(f"plot: wrote {reward_path} and {energy_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uav-lifelong",
        description="Lifelong-RL IoT/UAV simulation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dicts=False):
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default="runs/out", help="output directory")
        p.add_argument("--controller", default=None,
                       choices=["ac", "random", "force", "qnet"])
        p.add_argument("--episodes", type=int, default=None)
        if dicts:
            p.add_argument("--dicts", required=True, help="dictionary checkpoint")

    p = sub.add_parser("simulate", help="full two-stage pipeline")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train-dicts", help="stage one: train dictionaries")
    common(p)
    p.set_defaults(func=cmd_train_dicts)

    p = sub.add_parser("test-zeroshot", help="zero-shot evaluation")
    common(p, dicts=True)
    p.set_defaults(func=cmd_test_zeroshot)

    p = sub.add_parser("train-flight", help="stage two: flight controller")
    common(p, dicts=True)
    p.set_defaults(func=cmd_train_flight)

    p = sub.add_parser("sweep", help="grid over one hyperparameter")
    common(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="episodes.csv -> SVG charts")
    p.add_argument("--runs", nargs="+", required=True, help="run directories")
    p.add_argument("--out", default="plots")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
