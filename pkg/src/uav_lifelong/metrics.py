"""Run metrics: per-slot device series, per-flight records, aggregates.

Aggregates are always derived from the raw series, so every summary number
can be recomputed from the CSVs it ships with. Floats are written with
``repr`` (shortest round-trip form), which makes CSV output byte-stable
across runs with the same seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class FlightRecord:
    episode: int
    index: int
    start_slot: int
    origin: tuple[float, float]
    destination: int
    dest_coords: tuple[float, float]
    velocity: float
    distance: float
    energy: float
    travel_slots: int
    hover_slots: int
    reward: float = 0.0


@dataclass
class EpisodeMetrics:
    """One episode's raw series: arrays are (horizon, n_devices)."""

    episode: int
    aoi: np.ndarray
    backlog: np.ndarray
    cpu: np.ndarray
    cost: np.ndarray
    cpu_energy: np.ndarray
    flights: list[FlightRecord] = field(default_factory=list)
    z_detected: int = 0
    z_true: int = 0

    @property
    def mean_cost(self) -> float:
        return float(self.cost.mean())

    @property
    def mean_reward(self) -> float:
        return -self.mean_cost

    @property
    def mean_aoi(self) -> float:
        return float(self.aoi.mean())

    @property
    def mean_queue(self) -> float:
        return float(self.backlog.mean())

    @property
    def mean_cpu_energy(self) -> float:
        return float(self.cpu_energy.mean())

    @property
    def total_uav_energy(self) -> float:
        return float(sum(f.energy for f in self.flights))

    def objective(self, mu: float) -> float:
        """Balanced system objective: detected-environment-normalized device
        cost plus flight-normalized UAV energy."""
        z = max(self.z_detected, 1)
        m = max(len(self.flights), 1)
        return float(self.cost.sum()) / z + mu * self.total_uav_energy / m


@dataclass
class RunMetrics:
    phase: str
    mu: float
    episodes: list[EpisodeMetrics] = field(default_factory=list)

    @property
    def mean_cost(self) -> float:
        return float(np.mean([e.mean_cost for e in self.episodes]))

    @property
    def mean_reward(self) -> float:
        return -self.mean_cost

    @property
    def mean_aoi(self) -> float:
        return float(np.mean([e.mean_aoi for e in self.episodes]))

    @property
    def mean_queue(self) -> float:
        return float(np.mean([e.mean_queue for e in self.episodes]))

    @property
    def mean_cpu_energy(self) -> float:
        return float(np.mean([e.mean_cpu_energy for e in self.episodes]))

    @property
    def total_uav_energy(self) -> float:
        return float(sum(e.total_uav_energy for e in self.episodes))

    @property
    def objective(self) -> float:
        return float(np.mean([e.objective(self.mu) for e in self.episodes]))

    def summary(self) -> dict:
        return {
            "phase": self.phase,
            "episodes": len(self.episodes),
            "mean_cost": self.mean_cost,
            "mean_reward": self.mean_reward,
            "mean_aoi": self.mean_aoi,
            "mean_queue": self.mean_queue,
            "mean_cpu_energy": self.mean_cpu_energy,
            "total_uav_energy": self.total_uav_energy,
            "objective": self.objective,
            "flights": int(sum(len(e.flights) for e in self.episodes)),
            "z_detected": int(sum(e.z_detected for e in self.episodes)),
            "z_true": int(sum(e.z_true for e in self.episodes)),
        }


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _as_runs(metrics) -> list[RunMetrics]:
    return [metrics] if isinstance(metrics, RunMetrics) else list(metrics)


def write_devices_csv(path, metrics) -> None:
    """Per-slot device series for one run or a sequence of phase runs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "episode", "slot", "device",
                         "aoi", "backlog", "cpu", "cost"])
        for run in _as_runs(metrics):
            for ep in run.episodes:
                horizon, n = ep.aoi.shape
                for t in range(horizon):
                    for i in range(n):
                        writer.writerow([
                            run.phase, ep.episode, t, i,
                            _fmt(ep.aoi[t, i]), _fmt(ep.backlog[t, i]),
                            _fmt(ep.cpu[t, i]), _fmt(ep.cost[t, i]),
                        ])


def write_flights_csv(path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "phase", "episode", "flight", "start_slot", "origin_x", "origin_y",
            "destination", "dest_x", "dest_y", "velocity", "distance",
            "energy", "travel_slots", "hover_slots", "reward",
        ])
        for run in _as_runs(metrics):
            for ep in run.episodes:
                for f in ep.flights:
                    writer.writerow([
                        run.phase, f.episode, f.index, f.start_slot,
                        _fmt(f.origin[0]), _fmt(f.origin[1]),
                        f.destination, _fmt(f.dest_coords[0]), _fmt(f.dest_coords[1]),
                        _fmt(f.velocity), _fmt(f.distance), _fmt(f.energy),
                        f.travel_slots, f.hover_slots, _fmt(f.reward),
                    ])


def write_episodes_csv(path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "phase", "episode", "mean_cost", "mean_reward", "mean_aoi",
            "mean_queue", "mean_cpu_energy", "total_uav_energy", "flights",
            "objective", "z_detected", "z_true",
        ])
        for run in _as_runs(metrics):
            for ep in run.episodes:
                writer.writerow([
                    run.phase, ep.episode, _fmt(ep.mean_cost), _fmt(ep.mean_reward),
                    _fmt(ep.mean_aoi), _fmt(ep.mean_queue), _fmt(ep.mean_cpu_energy),
                    _fmt(ep.total_uav_energy), len(ep.flights),
                    _fmt(ep.objective(run.mu)), ep.z_detected, ep.z_true,
                ])


def write_summary_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
