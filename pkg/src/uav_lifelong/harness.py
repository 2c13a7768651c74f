"""End-to-end simulation: devices, UAV flights, lifelong learning, metrics.

The optimization is split into two stages. Stage one trains the coupled
dictionaries: the UAV flies to random devices, and each visit runs
environment discovery, change detection, a policy-gradient base learner on
the discovered environment, a sparse-code fit and a dictionary update,
then installs theta = L s on the device. Stage two freezes the
dictionaries, serves devices zero-shot warm starts (plus a short
fine-tune), and trains the flight controller on per-flight rewards.

Every stochastic component draws from its own seeded stream, derived from
the master seed, the phase tag and the component identity; two runs with
the same config and seed produce identical metrics byte for byte. Device
packet streams are independent of policy decisions, so paired pipeline
comparisons under one seed see identical arrival processes.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import envsim, lifelong
from .device import CostParams, drain_fifo
from .envsim import ParamRanges, build_schedule, truncated_normal
from .flightctl import (AcController, AcNetwork, Controller, ForceController,
                        QnetController, QNetwork, RandomController, Transition,
                        UavState)
from .lifelong import (CoupledDictionaries, detect_change,
                       feature_embed, fit_sparse_code, locate_change,
                       reinit_zero_columns, stack_target, stack_weights,
                       update_dictionary, zero_shot)
from .metrics import EpisodeMetrics, FlightRecord, RunMetrics
from .policy import (AOI_REF, BACKLOG_REF, FEATURE_CAP, EpisodeSimulator,
                     InteractionHistory, LinearPolicy, base_learn)
from .uav import PropulsionParams, flight


@dataclass
class ExperimentConfig:
    """Everything one reproducible run needs; defaults are desk scale."""

    # experiment
    n_devices: int = 6
    region_side: float = 1000.0
    horizon_slots: int = 3000
    episodes: int = 4
    master_seed: int = 7
    controller: str = "ac"          # ac | random | force | qnet
    pipeline: str = "lifelong"      # lifelong | pg
    placement_seed: int | None = None
    # device environments
    beta: float = 0.1
    duration_mean_range: tuple = (100.0, 550.0)
    duration_std_frac: float = 0.1
    lambda_range: tuple = (0.02, 0.10)
    a_bar_range: tuple = (1e7, 5e7)
    sigma_range: tuple = (5e6, 5e6)
    kappa_range: tuple = (1e-21, 1e-21)
    eps_max_range: tuple = (3e6, 8e6)
    # device policy / base learner
    sigma_z: float = 1.5e6
    learn_rate: float = 0.1
    episodes_per_step: int = 20
    base_learn_budget: int = 160
    base_learn_budget_new: int = 300
    rollout_horizon: int = 60  # slots per synthetic learning episode
    step_cap: float = 1.0
    test_finetune_budget: int = 160
    init_policy_std: float = 0.1
    # lifelong engine
    h: int = 4
    eta1: float = 1.0
    eta2: float = 1e-3
    eta3: float = 1e-4
    gamma_floor: float = 0.05
    gamma_trace_cap: float = 25.0
    change_threshold: float = 0.15
    estimation_window: int = 200
    # flight control
    mu: float = 0.5
    v_min: float = 10.0
    v_max: float = 40.0
    eta4: float = 0.99
    eta_a: float = 1e-3
    hidden_width: int = 64
    velocity_noise: float = 0.5
    initial_velocity: float = 16.0
    value_coef: float = 0.5
    entropy_coef: float = 0.02
    epsilon_start: float = 0.5
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.995
    hover_slots: int = 1
    slot_seconds: float = 1.0
    # propulsion
    propulsion: PropulsionParams = field(default_factory=PropulsionParams)

    def validate(self) -> None:
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        if self.horizon_slots < 1 or self.episodes < 1:
            raise ValueError("horizon_slots and episodes must be >= 1")
        if self.region_side <= 0:
            raise ValueError("region_side must be positive")
        if self.controller not in ("ac", "random", "force", "qnet"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.pipeline not in ("lifelong", "pg"):
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must be in [0, 1]")
        if self.v_min <= 0 or self.v_max < self.v_min:
            raise ValueError("need 0 < v_min <= v_max")
        for name in ("duration_mean_range", "lambda_range", "a_bar_range",
                     "sigma_range", "kappa_range", "eps_max_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"range {name} has min > max")
        if self.duration_mean_range[0] < 1:
            raise ValueError("duration_mean_range must start at >= 1 slot")
        if self.h < 1:
            raise ValueError("h must be >= 1")

    def param_ranges(self) -> ParamRanges:
        return ParamRanges(
            lam=tuple(self.lambda_range), a_bar=tuple(self.a_bar_range),
            sigma=tuple(self.sigma_range), kappa=tuple(self.kappa_range),
            eps_max=tuple(self.eps_max_range),
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in list(data.items()):
            if isinstance(value, tuple):
                data[key] = list(value)
        return data


def _rng(master_seed: int, *parts) -> np.random.Generator:
    """Independent generator for one named component of one run."""
    key = tuple(p if isinstance(p, (int, np.integer)) else zlib.crc32(str(p).encode())
                for p in parts)
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def place_devices(n: int, side: float, seed) -> np.ndarray:
    """Uniform i.i.d. device coordinates in the [0, side]^2 square."""
    if n < 1:
        raise ValueError("need at least one device")
    if side <= 0:
        raise ValueError("side must be positive")
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, side, size=(n, 2))


@dataclass
class _DeviceSim:
    """Live per-device simulation state within one episode."""

    device_id: int
    schedule: envsim.EnvironmentSchedule
    kappa: float
    eps_max: float
    packets_rng: np.random.Generator
    act_rng: np.random.Generator
    theta: np.ndarray
    sigma_z: float
    aoi: int = 1
    backlog: float = 0.0
    pending: list = field(default_factory=list)
    seg_idx: int = 0
    window_start: int = 0
    prev_descriptor: lifelong.EnvironmentDescriptor | None = None
    last_alpha: np.ndarray | None = None
    env_ordinal: int = -1
    hist: dict = None
    roll_arrived: list = field(default_factory=list)
    roll_sizes: list = field(default_factory=list)

    def __post_init__(self):
        self.reset_window(0)

    def reset_window(self, slot: int) -> None:
        self.window_start = slot
        self.hist = {k: [] for k in ("aoi", "backlog", "actions", "rewards",
                                     "arrived", "sizes", "backlog_next")}

    def estimation_arrays(self, window: int):
        arr = self.roll_arrived[-window:]
        siz = self.roll_sizes[-window:]
        return np.array(arr, dtype=bool), np.array(siz, dtype=float)

    def trim_estimation(self, keep: int) -> None:
        keep = max(int(keep), 1)
        self.roll_arrived = self.roll_arrived[-keep:]
        self.roll_sizes = self.roll_sizes[-keep:]

    def install(self, pol: LinearPolicy) -> None:
        self.theta = np.asarray(pol.theta, dtype=float)
        self.sigma_z = pol.sigma_z

    def take_history(self, end_slot: int) -> InteractionHistory | None:
        if end_slot <= self.window_start:
            return None
        hist = InteractionHistory(
            device_id=self.device_id,
            start_slot=self.window_start, end_slot=end_slot,
            action_scale=self.eps_max, sigma_z=self.sigma_z,
            aoi=np.array(self.hist["aoi"]),
            backlog=np.array(self.hist["backlog"]),
            actions=np.array(self.hist["actions"]),
            rewards=np.array(self.hist["rewards"]),
            arrived=np.array(self.hist["arrived"], dtype=bool),
            sizes=np.array(self.hist["sizes"]),
            backlog_next=np.array(self.hist["backlog_next"]),
        )
        self.reset_window(end_slot)
        return hist


class _Simulation:
    """One seeded phase run: slot clock, flight loop, visit logic."""

    def __init__(self, config: ExperimentConfig, tag: str, episode: int,
                 dicts: CoupledDictionaries | None, controller: Controller,
                 update_dicts: bool, train_controller: bool,
                 positions: np.ndarray, period_means: np.ndarray,
                 device_constants: list[tuple[float, float]],
                 cost_scale: "_RunningScale", energy_scale: "_RunningScale"):
        self.cfg = config
        self.tag = tag
        self.episode = episode
        self.dicts = dicts
        self.controller = controller
        self.update_dicts = update_dicts
        self.train_controller = train_controller
        self.positions = positions
        self.cost_scale = cost_scale
        self.energy_scale = energy_scale

        seed = config.master_seed
        n, horizon = config.n_devices, config.horizon_slots
        self.uav_rng = _rng(seed, tag, episode, "uav")
        self.learn_rng = _rng(seed, tag, episode, "learn")

        self.devices = []
        for i in range(n):
            kappa_i, eps_i = device_constants[i]
            ranges = replace(config.param_ranges(),
                             kappa=(kappa_i, kappa_i), eps_max=(eps_i, eps_i))
            schedule = build_schedule(
                i, period_means[i], config.duration_std_frac * period_means[i],
                ranges, horizon, _rng(seed, tag, episode, "schedule", i))
            init_rng = _rng(seed, tag, episode, "init", i)
            theta0 = init_rng.normal(0.0, config.init_policy_std, size=2)
            self.devices.append(_DeviceSim(
                device_id=i, schedule=schedule, kappa=kappa_i, eps_max=eps_i,
                packets_rng=_rng(seed, tag, episode, "packets", i),
                act_rng=_rng(seed, tag, episode, "act", i),
                theta=theta0, sigma_z=config.sigma_z,
            ))

        self.aoi = np.zeros((horizon, n))
        self.backlog = np.zeros((horizon, n))
        self.cpu = np.zeros((horizon, n))
        self.cost = np.zeros((horizon, n))
        self.cpu_energy = np.zeros((horizon, n))
        self.flights: list[FlightRecord] = []
        self.z_detected = 0
        self.slot = 0
        self.uav_pos = (0.0, 0.0)
        self.elapsed = np.zeros(n)

    # -- device stepping ---------------------------------------------------

    def _advance(self, n_slots: int) -> None:
        cfg = self.cfg
        beta = cfg.beta
        for _ in range(n_slots):
            t = self.slot
            for dev in self.devices:
                segments = dev.schedule.segments
                while (dev.seg_idx + 1 < len(segments)
                       and segments[dev.seg_idx + 1][0] <= t):
                    dev.seg_idx += 1
                env = segments[dev.seg_idx][1]

                x0 = dev.aoi / AOI_REF
                if x0 > FEATURE_CAP:
                    x0 = FEATURE_CAP
                x1 = dev.backlog / BACKLOG_REF
                if x1 > FEATURE_CAP:
                    x1 = FEATURE_CAP
                cpu = ((dev.theta[0] * x0 + dev.theta[1] * x1) * dev.eps_max
                       + dev.sigma_z * dev.act_rng.standard_normal())
                if cpu < 0.0:
                    cpu = 0.0
                elif cpu > dev.eps_max:
                    cpu = dev.eps_max
                energy = dev.kappa * cpu**3
                c = beta * dev.aoi + (1.0 - beta) * energy

                arrived = dev.packets_rng.random() < env.lam
                size = 0.0
                if arrived:
                    sigma_a = math.sqrt(env.sigma_sq)
                    size = env.a_bar if sigma_a == 0.0 else truncated_normal(
                        env.a_bar, sigma_a, dev.packets_rng)
                    dev.pending.append([size, t])

                i = dev.device_id
                self.aoi[t, i] = dev.aoi
                self.backlog[t, i] = dev.backlog
                self.cpu[t, i] = cpu
                self.cost[t, i] = c
                self.cpu_energy[t, i] = energy

                h = dev.hist
                h["aoi"].append(dev.aoi)
                h["backlog"].append(dev.backlog)
                h["actions"].append(cpu)
                h["rewards"].append(-c)
                h["arrived"].append(arrived)
                h["sizes"].append(size)
                dev.roll_arrived.append(arrived)
                dev.roll_sizes.append(size)

                completed = drain_fifo(dev.pending, cpu)
                dev.backlog = sum(rem for rem, _ in dev.pending)
                h["backlog_next"].append(dev.backlog)
                dev.aoi = (t + 1) - completed[-1] if completed else dev.aoi + 1
            self.slot += 1

    # -- visits ------------------------------------------------------------

    def _descriptor_env(self, desc) -> envsim.EnvironmentParams:
        a_bar = desc.a_bar_hat if desc.a_bar_hat > 0 else 1.0
        return envsim.EnvironmentParams(
            lam=min(max(desc.lambda_hat, 0.0), 1.0), a_bar=a_bar,
            sigma_sq=max(desc.sigma_sq_hat, 0.0),
            kappa=desc.kappa, eps_max=desc.eps_max)

    def _base_learn(self, dev, desc, initial: LinearPolicy, budget: int):
        sim = EpisodeSimulator(self._descriptor_env(desc),
                               CostParams(self.cfg.beta, desc.kappa),
                               self.cfg.rollout_horizon, self.learn_rng)
        alts = [LinearPolicy(
            self.learn_rng.normal(0.0, self.cfg.init_policy_std, size=2),
            self.cfg.sigma_z)]
        if dev is not None and dev.last_alpha is not None:
            alts.append(LinearPolicy(dev.last_alpha, self.cfg.sigma_z))
        result = base_learn(sim, initial, budget,
                            learn_rate=self.cfg.learn_rate,
                            episodes_per_step=self.cfg.episodes_per_step,
                            step_cap=self.cfg.step_cap,
                            alt_initials=tuple(alts))
        if dev is not None:
            dev.last_alpha = result.alpha.copy()
        return result

    def _install(self, dev, desc, theta) -> None:
        """Install a policy, projected so it can still drain the queue.

        A policy whose mean duty at the feature cap falls below the
        environment's arrival load leaves a deeply backlogged device stuck
        there forever (the learner never sees that regime in fresh-start
        rollouts); the projection raises the backlog weight just enough to
        guarantee recovery.
        """
        theta = np.asarray(theta, dtype=float).copy()
        if not desc.low_confidence and desc.eps_max > 0:
            load = desc.lambda_hat * desc.a_bar_hat / desc.eps_max
            need = min(1.25 * load, 1.0)
            duty_at_cap = FEATURE_CAP * (theta[0] + theta[1])
            if duty_at_cap < need:
                theta[1] += (need - duty_at_cap) / FEATURE_CAP
        dev.install(LinearPolicy(theta, self.cfg.sigma_z))

    def _visit(self, dev: _DeviceSim) -> int | None:
        """Update the visited device's policy; returns the estimated slots
        since its current environment began when a change was detected.

        Change detection compares descriptors estimated on a rolling
        window (up to ``estimation_window`` slots), which keeps the
        false-positive rate down even when visits come only a few dozen
        slots apart; on a detected change the window is restarted at the
        located change point so the estimates describe the new environment
        only.
        """
        cfg = self.cfg
        hist = dev.take_history(self.slot)
        if hist is None:
            return None
        win = cfg.estimation_window
        arr, siz = dev.estimation_arrays(win)
        desc = lifelong.descriptor_from_arrivals(arr, siz, dev.kappa, dev.eps_max)
        changed = (dev.prev_descriptor is None
                   or detect_change(dev.prev_descriptor, desc, cfg.change_threshold))
        slots_since = None
        if changed:
            self.z_detected += 1
            dev.env_ordinal += 1
            split = locate_change(hist, dev.kappa, dev.eps_max)
            slots_since = len(hist) - split if split is not None else len(hist) // 2
            dev.trim_estimation(min(slots_since, win))
            arr, siz = dev.estimation_arrays(win)
            desc = lifelong.descriptor_from_arrivals(arr, siz, dev.kappa, dev.eps_max)
        dev.prev_descriptor = desc

        current = LinearPolicy(dev.theta, dev.sigma_z)
        if self.update_dicts and cfg.pipeline == "lifelong":
            self._lifelong_visit(dev, desc, changed, current)
        elif cfg.pipeline == "pg":
            self._pg_visit(dev, desc, changed, current)
        else:
            self._zeroshot_visit(dev, desc, changed, current)
        return slots_since

    def _lifelong_visit(self, dev, desc, changed, current):
        cfg = self.cfg
        if changed and self.dicts.env_count >= 1:
            initial = zero_shot(self.dicts, desc, cfg.eta2, sigma_z=cfg.sigma_z)
        else:
            initial = current
        budget = cfg.base_learn_budget_new if changed else cfg.base_learn_budget
        result = self._base_learn(dev, desc, initial, budget)
        alpha, gamma = result.alpha, result.hessian
        # cap the trace so no single noisy environment dominates the
        # dictionary ridge, then anchor the curvature null directions,
        # otherwise the installed L s is unconstrained wherever the
        # rollouts never went
        trace = float(np.trace(gamma))
        if trace > cfg.gamma_trace_cap:
            gamma = gamma * (cfg.gamma_trace_cap / trace)
        gamma = gamma + cfg.gamma_floor * (np.trace(gamma) / len(alpha)) * np.eye(len(alpha))
        phi = feature_embed(desc)
        self.dicts = reinit_zero_columns(self.dicts, alpha, phi)
        code = fit_sparse_code(self.dicts, stack_target(alpha, phi),
                               stack_weights(gamma, cfg.eta1), cfg.eta2)
        key = f"{self.tag}:{self.episode}:{dev.device_id}:{dev.env_ordinal}"
        self.dicts = update_dictionary(self.dicts, code, alpha, gamma, phi,
                                       changed, cfg.eta1, cfg.eta3, key=key)
        self._install(dev, desc, self.dicts.L @ code.s)

    def _pg_visit(self, dev, desc, changed, current):
        cfg = self.cfg
        if changed:
            initial = LinearPolicy(
                self.learn_rng.normal(0.0, cfg.init_policy_std, size=2), cfg.sigma_z)
        else:
            initial = current
        if self.update_dicts:
            budget = cfg.base_learn_budget_new if changed else cfg.base_learn_budget
        else:
            budget = cfg.test_finetune_budget
        if budget > 0:
            result = self._base_learn(dev, desc, initial, budget)
            self._install(dev, desc, result.alpha)
        else:
            self._install(dev, desc, initial.theta)

    def _zeroshot_visit(self, dev, desc, changed, current):
        cfg = self.cfg
        if changed:
            initial = zero_shot(self.dicts, desc, cfg.eta2, sigma_z=cfg.sigma_z)
        else:
            initial = current
        if cfg.test_finetune_budget > 0:
            result = self._base_learn(dev, desc, initial, cfg.test_finetune_budget)
            self._install(dev, desc, result.alpha)
        else:
            self._install(dev, desc, initial.theta)

    # -- flight loop ---------------------------------------------------------

    def run(self) -> EpisodeMetrics:
        cfg = self.cfg
        horizon = cfg.horizon_slots
        hover = cfg.hover_slots
        m = 0
        while self.slot < horizon:
            state = UavState(self.uav_pos, self.elapsed.copy())
            action = self.controller.select(state, self.uav_rng)
            dest = action.destination
            fl = flight(cfg.propulsion, self.uav_pos,
                        tuple(self.positions[dest]), dest, action.velocity,
                        cfg.slot_seconds, cfg.v_min, cfg.v_max)
            window = fl.travel_slots + hover
            if self.slot + window > horizon:
                self._advance(horizon - self.slot)
                break
            start_slot = self.slot
            self._advance(fl.travel_slots)
            self.uav_pos = tuple(self.positions[dest])
            slots_since = self._visit(self.devices[dest])
            self._advance(hover)

            self.elapsed += window
            if slots_since is not None:
                self.elapsed[dest] = slots_since + hover

            reward = 0.0
            if self.train_controller:
                # SMDP reward: discounted within-window sum of the mean
                # per-slot device cost; a duration-independent reward plus
                # gamma^window bootstrapping would pay the controller for
                # pushing the (negative-valued) future away by flying slowly
                per_slot = self.cost[start_slot:self.slot, :].mean(axis=1)
                discounts = cfg.eta4 ** np.arange(len(per_slot))
                window_cost = float(per_slot @ discounts)
                e_n = self.energy_scale.normalize(fl.energy)
                c_n = self.cost_scale.normalize(window_cost)
                reward = -(cfg.mu * e_n + c_n)
                next_state = UavState(self.uav_pos, self.elapsed.copy())
                self.controller.update(
                    Transition(state, action, reward, next_state, slots=window))

            self.flights.append(FlightRecord(
                episode=self.episode, index=m, start_slot=start_slot,
                origin=fl.origin, destination=dest, dest_coords=fl.dest_coords,
                velocity=fl.velocity, distance=fl.distance, energy=fl.energy,
                travel_slots=fl.travel_slots, hover_slots=hover, reward=reward,
            ))
            m += 1

        z_true = sum(
            sum(1 for start, _ in dev.schedule.segments if start < horizon)
            for dev in self.devices)
        return EpisodeMetrics(
            episode=self.episode, aoi=self.aoi, backlog=self.backlog,
            cpu=self.cpu, cost=self.cost, cpu_energy=self.cpu_energy,
            flights=self.flights, z_detected=self.z_detected, z_true=z_true,
        )


class _RunningScale:
    """Mean-magnitude normalizer for flight-reward terms.

    The scale adapts during a warmup and then freezes: a normalizer that
    kept tracking the policy would divide away exactly the slow reward
    trends the controller is supposed to follow.
    """

    def __init__(self, warmup: int = 40):
        self.warmup = warmup
        self.count = 0
        self.mean = 0.0

    def normalize(self, value: float) -> float:
        if self.count < self.warmup:
            self.count += 1
            self.mean += (abs(value) - self.mean) / self.count
        return value / max(self.mean, 1e-12)


def _setup(config: ExperimentConfig):
    config.validate()
    seed = config.master_seed
    placement_seed = (config.placement_seed if config.placement_seed is not None
                      else _rng(seed, "placement"))
    positions = place_devices(config.n_devices, config.region_side, placement_seed)
    durations_rng = _rng(seed, "durations")
    period_means = durations_rng.uniform(*config.duration_mean_range,
                                         size=config.n_devices)
    constants_rng = _rng(seed, "constants")
    device_constants = [
        (constants_rng.uniform(*config.kappa_range),
         constants_rng.uniform(*config.eps_max_range))
        for _ in range(config.n_devices)
    ]
    return positions, period_means, device_constants


def _run_phase(config: ExperimentConfig, tag: str, episodes: int,
               dicts: CoupledDictionaries | None, controller: Controller,
               update_dicts: bool, train_controller: bool):
    positions, period_means, device_constants = _setup(config)
    cost_scale, energy_scale = _RunningScale(), _RunningScale()
    metrics = RunMetrics(phase=tag, mu=config.mu)
    for episode in range(episodes):
        sim = _Simulation(config, tag, episode, dicts, controller,
                          update_dicts, train_controller, positions,
                          period_means, device_constants, cost_scale,
                          energy_scale)
        metrics.episodes.append(sim.run())
        dicts = sim.dicts
    return metrics, dicts


def run_training(config: ExperimentConfig, seed_tag: str = "train"):
    """Stage one: learn the coupled dictionaries under random flights.

    Returns (dictionaries, metrics). With ``pipeline='pg'`` the same loop
    runs the plain policy-gradient baseline and the returned dictionaries
    stay empty.
    """
    config.validate()
    dicts = CoupledDictionaries(d=2, d_z=lifelong.D_Z, h=config.h)
    controller = RandomController(config.n_devices)
    metrics, dicts = _run_phase(config, seed_tag, config.episodes, dicts,
                                controller, update_dicts=True,
                                train_controller=False)
    return dicts, metrics


def run_testing(config: ExperimentConfig, dicts: CoupledDictionaries,
                episodes: int | None = None, seed_tag: str = "test") -> RunMetrics:
    """Stage-one evaluation: fresh environments served by zero-shot warm
    starts (plus a short fine-tune), dictionaries frozen."""
    config.validate()
    if dicts is None or dicts.env_count < 1:
        raise RuntimeError("run_testing requires trained dictionaries")
    controller = RandomController(config.n_devices)
    metrics, _ = _run_phase(config, seed_tag, episodes or config.episodes,
                            dicts, controller, update_dicts=False,
                            train_controller=False)
    return metrics


def make_controller(config: ExperimentConfig, period_means=None,
                    rng: np.random.Generator | None = None) -> Controller:
    """Instantiate the configured flight controller."""
    name = config.controller
    if name == "random":
        return RandomController(config.n_devices)
    if name == "force":
        if period_means is None:
            _, period_means, _ = _setup(config)
        return ForceController(period_means)
    if name == "ac":
        net = AcNetwork(
            config.n_devices, hidden=config.hidden_width, v_min=config.v_min,
            v_max=config.v_max, discount=config.eta4, learn_rate=config.eta_a,
            velocity_noise=config.velocity_noise, value_coef=config.value_coef,
            entropy_coef=config.entropy_coef, region_side=config.region_side,
            initial_velocity=config.initial_velocity,
            rng=rng or _rng(config.master_seed, "controller"))
        return AcController(net)
    if name == "qnet":
        qnet = QNetwork(
            config.n_devices, hidden=config.hidden_width, discount=config.eta4,
            learn_rate=config.eta_a, region_side=config.region_side,
            rng=rng or _rng(config.master_seed, "controller"))
        return QnetController(qnet, config.epsilon_start, config.epsilon_end,
                              config.epsilon_decay)
    raise ValueError(f"unknown controller {name!r}")


def run_flight_training(config: ExperimentConfig, dicts: CoupledDictionaries,
                        episodes: int | None = None, seed_tag: str = "flight",
                        controller: Controller | None = None):
    """Stage two: train the flight controller with zero-shot device updates.

    Returns (controller, metrics). Baseline controllers pass through the
    same loop so paired comparisons see identical environments.
    """
    config.validate()
    if dicts is None or dicts.env_count < 1:
        raise RuntimeError("run_flight_training requires trained dictionaries")
    _, period_means, _ = _setup(config)
    if controller is None:
        controller = make_controller(config, period_means)
    metrics, _ = _run_phase(config, seed_tag, episodes or config.episodes,
                            dicts, controller, update_dicts=False,
                            train_controller=controller.trainable)
    return controller, metrics


def cross_validate_h(config: ExperimentConfig, candidates=(2, 4, 6),
                     n_train: int = 24, n_test: int = 8) -> int:
    """Pick the latent dimension by zero-shot reconstruction error on
    held-out synthetic environments."""
    rng = _rng(config.master_seed, "cv")
    ranges = config.param_ranges()
    envs = []
    for _ in range(n_train + n_test):
        kappa = rng.uniform(*ranges.kappa)
        eps = rng.uniform(*ranges.eps_max)
        envs.append(envsim.EnvironmentParams(
            lam=rng.uniform(*ranges.lam), a_bar=rng.uniform(*ranges.a_bar),
            sigma_sq=rng.uniform(*ranges.sigma) ** 2, kappa=kappa, eps_max=eps))

    results = []
    for h in candidates:
        dicts = CoupledDictionaries(d=2, d_z=lifelong.D_Z, h=h)
        learn_rng = _rng(config.master_seed, "cv-learn", h)
        for k, env in enumerate(envs[:n_train]):
            sim = EpisodeSimulator(env, CostParams(config.beta, env.kappa),
                                   config.rollout_horizon, learn_rng)
            res = base_learn(sim, LinearPolicy(np.zeros(2), config.sigma_z),
                             config.base_learn_budget,
                             learn_rate=config.learn_rate,
                             episodes_per_step=config.episodes_per_step)
            phi = feature_embed(env)
            dicts = reinit_zero_columns(dicts, res.alpha, phi)
            code = fit_sparse_code(dicts, stack_target(res.alpha, phi),
                                   stack_weights(res.hessian, config.eta1),
                                   config.eta2)
            dicts = update_dictionary(dicts, code, res.alpha, res.hessian, phi,
                                      True, config.eta1, config.eta3, key=k)
        err = 0.0
        for env in envs[n_train:]:
            sim = EpisodeSimulator(env, CostParams(config.beta, env.kappa),
                                   config.rollout_horizon, learn_rng)
            res = base_learn(sim, LinearPolicy(np.zeros(2), config.sigma_z),
                             config.base_learn_budget,
                             learn_rate=config.learn_rate,
                             episodes_per_step=config.episodes_per_step)
            desc = lifelong.EnvironmentDescriptor(
                env.lam, env.a_bar, env.sigma_sq, env.kappa, env.eps_max)
            warm = zero_shot(dicts, desc, config.eta2, sigma_z=config.sigma_z)
            err += float(np.linalg.norm(warm.theta - res.alpha))
        results.append((err, h))
    return min(results)[1]
