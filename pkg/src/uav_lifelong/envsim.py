"""Non-stationary environment generation for IoT devices.

Each device lives through a sequence of stationary segments; a segment is
described by an arrival probability, a packet-size distribution and the
device's hardware constants. Segment durations are Gaussian (clamped to at
least one slot) and segment parameters are drawn i.i.d. uniform from
configured ranges. Everything is driven by explicit numpy Generators, so
identical seeds give bit-identical schedules and packet streams.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass(frozen=True)
class EnvironmentParams:
    """One stationary environment: arrival rate, size distribution, chip
    constants."""

    lam: float        # packet arrival probability per slot
    a_bar: float      # mean packet size, CPU cycles
    sigma_sq: float   # packet size variance, cycles^2
    kappa: float      # chip energy coefficient, J/cycles^3
    eps_max: float    # CPU cycle budget per slot

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0,1], got {self.lam}")
        if self.a_bar <= 0:
            raise ValueError("a_bar must be positive")
        if self.sigma_sq < 0:
            raise ValueError("sigma_sq must be nonnegative")
        if self.kappa <= 0 or self.eps_max <= 0:
            raise ValueError("kappa and eps_max must be positive")


@dataclass(frozen=True)
class ParamRanges:
    """Uniform sampling ranges for per-segment environment parameters.

    kappa and eps_max are physical device properties: they are drawn once
    per device, not per segment.
    """

    lam: tuple[float, float] = (0.02, 0.10)
    a_bar: tuple[float, float] = (1e7, 5e7)
    sigma: tuple[float, float] = (5e6, 5e6)
    kappa: tuple[float, float] = (1e-21, 1e-21)
    eps_max: tuple[float, float] = (3e6, 8e6)

    def __post_init__(self):
        for name in ("lam", "a_bar", "sigma", "kappa", "eps_max"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"range {name} has min > max: ({lo}, {hi})")


@dataclass(frozen=True)
class PacketEvent:
    arrived: bool
    size: float           # CPU cycles, 0 when no arrival
    generation_slot: int


@dataclass
class EnvironmentSchedule:
    """Per-device piecewise-stationary timeline over [0, horizon_slots)."""

    device_id: int
    horizon_slots: int
    duration_mean: float
    duration_std: float
    segments: list[tuple[int, EnvironmentParams]] = field(default_factory=list)

    @property
    def segment_starts(self) -> list[int]:
        return [start for start, _ in self.segments]

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "horizon_slots": self.horizon_slots,
            "duration_mean": self.duration_mean,
            "duration_std": self.duration_std,
            "segments": [
                {"start_slot": start, "params": asdict(params)}
                for start, params in self.segments
            ],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _draw_params(ranges: ParamRanges, kappa: float, eps_max: float,
                 rng: np.random.Generator) -> EnvironmentParams:
    lam = rng.uniform(*ranges.lam)
    a_bar = rng.uniform(*ranges.a_bar)
    sigma = rng.uniform(*ranges.sigma)
    return EnvironmentParams(lam=lam, a_bar=a_bar, sigma_sq=sigma * sigma,
                             kappa=kappa, eps_max=eps_max)


def build_schedule(
    device_id: int,
    duration_mean: float,
    duration_std: float,
    param_ranges: ParamRanges,
    horizon_slots: int,
    seed,
) -> EnvironmentSchedule:
    """Sample a full environment timeline for one device.

    Segment durations ~ N(duration_mean, duration_std^2), rounded and
    clamped to >= 1 slot; segment parameters are uniform draws from
    ``param_ranges``. ``seed`` may be an int or a Generator.
    """
    if horizon_slots < 1:
        raise ValueError("horizon_slots must be >= 1")
    if duration_mean < 1:
        raise ValueError("duration_mean must be >= 1")
    rng = np.random.default_rng(seed)
    kappa = rng.uniform(*param_ranges.kappa)
    eps_max = rng.uniform(*param_ranges.eps_max)

    schedule = EnvironmentSchedule(device_id, horizon_slots, duration_mean, duration_std)
    start = 0
    while start < horizon_slots:
        params = _draw_params(param_ranges, kappa, eps_max, rng)
        schedule.segments.append((start, params))
        duration = max(1, int(round(rng.normal(duration_mean, duration_std))))
        start += duration
    return schedule


def env_at(schedule: EnvironmentSchedule, slot: int) -> EnvironmentParams:
    """Parameters of the segment containing ``slot`` (inclusive-left
    boundaries)."""
    if not 0 <= slot < schedule.horizon_slots:
        raise IndexError(f"slot {slot} outside horizon [0, {schedule.horizon_slots})")
    idx = bisect.bisect_right(schedule.segment_starts, slot) - 1
    return schedule.segments[idx][1]


def truncated_normal(mean: float, std: float, rng: np.random.Generator,
                     max_tries: int = 1000) -> float:
    """One strictly positive Gaussian draw by rejection.

    At the packet-size scales used here the rejection rate is negligible;
    the try cap only guards against degenerate configurations.
    """
    if std == 0.0:
        if mean <= 0:
            raise ValueError("degenerate truncated normal with nonpositive mean")
        return mean
    for _ in range(max_tries):
        x = rng.normal(mean, std)
        if x > 0.0:
            return x
    raise RuntimeError("truncated normal sampler failed to find a positive draw")


def sample_packet(env: EnvironmentParams, slot: int, rng: np.random.Generator) -> PacketEvent:
    """Bernoulli arrival with a positive, truncated-Gaussian size."""
    if rng.random() >= env.lam:
        return PacketEvent(False, 0.0, slot)
    size = truncated_normal(env.a_bar, np.sqrt(env.sigma_sq), rng)
    return PacketEvent(True, size, slot)
