"""Simulation harness tests: placement, determinism, clock coherence,
metric bookkeeping, and the phase entry points."""

import numpy as np
import pytest
from dataclasses import replace

from uav_lifelong.harness import (ExperimentConfig, cross_validate_h,
                                  make_controller, place_devices,
                                  run_flight_training, run_testing,
                                  run_training)
from uav_lifelong.lifelong import CoupledDictionaries
from uav_lifelong.metrics import (write_devices_csv, write_episodes_csv,
                                  write_flights_csv)

SMALL = ExperimentConfig(
    n_devices=2, horizon_slots=500, episodes=1, master_seed=5,
    base_learn_budget=80, base_learn_budget_new=120, test_finetune_budget=80,
)


def test_place_devices_reproducible_and_bounded():
    a = place_devices(10, 1000.0, seed=3)
    b = place_devices(10, 1000.0, seed=3)
    assert np.array_equal(a, b)
    assert a.shape == (10, 2)
    assert np.all((a >= 0) & (a <= 1000.0))


def test_place_devices_mean_near_center():
    pts = place_devices(10_000, 1000.0, seed=0)
    assert np.all(np.abs(pts.mean(axis=0) - 500.0) <= 20.0)


def test_place_devices_validation():
    with pytest.raises(ValueError):
        place_devices(0, 100.0, seed=1)
    with pytest.raises(ValueError):
        place_devices(3, 0.0, seed=1)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(n_devices=0).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(controller="glider").validate()
    with pytest.raises(ValueError):
        ExperimentConfig(lambda_range=(0.5, 0.1)).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(mu=1.5).validate()


def test_run_training_returns_trained_dicts():
    dicts, metrics = run_training(SMALL)
    assert dicts.env_count >= 1
    assert len(metrics.episodes) == 1
    ep = metrics.episodes[0]
    assert ep.aoi.shape == (500, 2)
    assert ep.z_true >= 2


def test_training_is_deterministic():
    _, m1 = run_training(SMALL)
    _, m2 = run_training(SMALL)
    e1, e2 = m1.episodes[0], m2.episodes[0]
    assert np.array_equal(e1.cost, e2.cost)
    assert np.array_equal(e1.cpu, e2.cpu)
    assert len(e1.flights) == len(e2.flights)
    for f1, f2 in zip(e1.flights, e2.flights):
        assert (f1.destination, f1.velocity, f1.energy) == \
               (f2.destination, f2.velocity, f2.energy)


def test_clock_coherence_of_flight_records():
    _, metrics = run_training(SMALL)
    for ep in metrics.episodes:
        for prev, nxt in zip(ep.flights, ep.flights[1:]):
            advanced = nxt.start_slot - prev.start_slot
            assert advanced == prev.travel_slots + prev.hover_slots


def test_aggregates_recomputable_from_series():
    _, metrics = run_training(SMALL)
    ep = metrics.episodes[0]
    assert abs(ep.mean_cost - ep.cost.mean()) <= 1e-12
    expected_obj = ep.cost.sum() / max(ep.z_detected, 1) \
        + metrics.mu * sum(f.energy for f in ep.flights) / max(len(ep.flights), 1)
    assert abs(ep.objective(metrics.mu) - expected_obj) <= 1e-9 * max(abs(expected_obj), 1)


def test_env_count_covers_visited_segments():
    # one long segment per device per episode, all devices visited
    cfg = replace(SMALL, duration_mean_range=(10_000.0, 10_000.0),
                  horizon_slots=600, episodes=2)
    dicts, metrics = run_training(cfg)
    visited = {
        (ep.episode, f.destination)
        for ep in metrics.episodes for f in ep.flights
    }
    assert dicts.env_count >= len(visited)


def test_run_testing_requires_trained_dicts():
    with pytest.raises(RuntimeError):
        run_testing(SMALL, CoupledDictionaries())


def test_run_testing_and_flight_training_smoke():
    dicts, _ = run_training(SMALL)
    tm = run_testing(SMALL, dicts, episodes=1)
    assert len(tm.episodes) == 1
    ctrl, fm = run_flight_training(replace(SMALL, controller="force"), dicts,
                                   episodes=1)
    assert len(fm.episodes) == 1
    assert all(f.velocity == 20.0 for f in fm.episodes[0].flights)


def test_make_controller_variants():
    for name in ("ac", "random", "force", "qnet"):
        ctrl = make_controller(replace(SMALL, controller=name))
        assert hasattr(ctrl, "select")


def test_packet_streams_shared_across_pipelines():
    # identical seeds: the lifelong and pg pipelines see the same arrivals
    _, m_ll = run_training(SMALL)
    _, m_pg = run_training(replace(SMALL, pipeline="pg"))
    # arrival sizes enter backlog identically only until policies diverge,
    # so compare the schedules through the true segment count instead
    assert m_ll.episodes[0].z_true == m_pg.episodes[0].z_true


def test_csv_writers_round_trip(tmp_path):
    _, metrics = run_training(SMALL)
    for writer, name in ((write_devices_csv, "devices.csv"),
                         (write_flights_csv, "flights.csv"),
                         (write_episodes_csv, "episodes.csv")):
        path = tmp_path / name
        writer(path, metrics)
        text = path.read_text()
        assert text.startswith("phase,")
        assert "train" in text


def test_csv_bytes_deterministic(tmp_path):
    _, m1 = run_training(SMALL)
    _, m2 = run_training(SMALL)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_devices_csv(p1, m1)
    write_devices_csv(p2, m2)
    assert p1.read_bytes() == p2.read_bytes()


def test_cross_validate_h_returns_candidate():
    cfg = replace(SMALL, base_learn_budget=60)
    best = cross_validate_h(cfg, candidates=(2, 4), n_train=6, n_test=2)
    assert best in (2, 4)


def test_single_device_cost_decreases_over_run():
    # one device, one environment, visits every ~40 slots: the mean cost of
    # the last quarter should beat the first quarter in most seeds
    improved = 0
    for seed in range(10):
        cfg = replace(SMALL, n_devices=1, horizon_slots=2000,
                      duration_mean_range=(10_000.0, 10_000.0),
                      hover_slots=40, master_seed=30 + seed)
        _, metrics = run_training(cfg)
        series = metrics.episodes[0].cost[:, 0]
        quarter = len(series) // 4
        improved += series[-quarter:].mean() < series[:quarter].mean()
    assert improved >= 8


def test_self_transfer_reaches_training_steady_state():
    # testing on the exact environments used for training: zero-shot plus a
    # short fine-tune should land near the training phase's steady state
    cfg = replace(SMALL, n_devices=3, horizon_slots=1200, episodes=2,
                  master_seed=77)
    dicts, train_metrics = run_training(cfg)
    test_metrics = run_testing(cfg, dicts, episodes=1, seed_tag="train")
    steady = train_metrics.episodes[-1].cost[600:, :].mean()
    replay = test_metrics.episodes[0].cost[600:, :].mean()
    assert replay <= 1.15 * steady


def test_force_beats_random_on_device_cost():
    wins = 0
    for seed in range(5):
        cfg = replace(SMALL, n_devices=4, horizon_slots=1200,
                      master_seed=40 + seed)
        dicts, _ = run_training(cfg)
        _, force = run_flight_training(replace(cfg, controller="force"),
                                       dicts, episodes=2)
        _, rnd = run_flight_training(replace(cfg, controller="random"),
                                     dicts, episodes=2)
        wins += force.mean_cost < rnd.mean_cost
    assert wins >= 3


def test_zero_mu_drifts_velocity_up():
    # without an energy term the controller is paid only for fresh devices,
    # so the learned velocity should rise above its prior
    cfg = replace(SMALL, n_devices=3, horizon_slots=1500, mu=0.0,
                  master_seed=55, initial_velocity=16.0)
    dicts, _ = run_training(cfg)
    ctrl, metrics = run_flight_training(replace(cfg, controller="ac"),
                                        dicts, episodes=6)
    first = np.mean([f.velocity for f in metrics.episodes[0].flights])
    last = np.mean([f.velocity for f in metrics.episodes[-1].flights])
    assert last > first
