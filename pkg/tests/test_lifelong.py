"""Coupled-dictionary engine tests.

Oracles: exhaustive-support least squares for the Lasso, a stacked
least-squares solve for the batch dictionary objective, and direct
recomputation for the accumulators. Statistical checks (discovery,
change detection) run on fixed seeds.
"""

import numpy as np
import pytest

from uav_lifelong.lifelong import (CoupledDictionaries, EnvironmentDescriptor,
                                   batch_objective, audit_accumulators,
                                   code_objective, descriptor_from_arrivals,
                                   detect_change, discover, feature_embed,
                                   fit_sparse_code, lasso_kkt_residual,
                                   load_checkpoint, locate_change,
                                   reinit_zero_columns, save_checkpoint,
                                   stack_target, stack_weights,
                                   update_dictionary, weighted_lasso,
                                   zero_shot, A_REF, KAPPA_REF, EPS_REF)
from uav_lifelong.envsim import EnvironmentParams
from uav_lifelong.policy import InteractionHistory


def _history_from_arrivals(arrived, sizes, scale=5e6, sigma_z=1.5e6):
    n = len(arrived)
    return InteractionHistory(
        device_id=0, start_slot=0, end_slot=n, action_scale=scale,
        sigma_z=sigma_z,
        aoi=np.ones(n), backlog=np.zeros(n), actions=np.zeros(n),
        rewards=np.zeros(n), arrived=np.array(arrived, dtype=bool),
        sizes=np.array(sizes, dtype=float), backlog_next=np.zeros(n),
    )


def _simulate_arrivals(lam, a_bar, sigma, n, rng):
    arrived = rng.random(n) < lam
    sizes = np.where(arrived, np.abs(rng.normal(a_bar, sigma, n)), 0.0)
    return arrived, sizes


# ---------------------------------------------------------------------------
# discovery


def test_discover_degenerate_stream():
    hist = _history_from_arrivals([True] * 50, [2e7] * 50)
    desc = discover(hist, 1e-21, 5e6)
    assert desc.lambda_hat == 1.0
    assert desc.a_bar_hat == 2e7
    assert desc.sigma_sq_hat == 0.0
    assert not desc.low_confidence


def test_discover_no_arrivals_low_confidence():
    hist = _history_from_arrivals([False] * 100, [0.0] * 100)
    desc = discover(hist, 1e-21, 5e6)
    assert desc.lambda_hat == 0.0
    assert desc.a_bar_hat == 0.0 and desc.sigma_sq_hat == 0.0
    assert desc.low_confidence


def test_discover_monte_carlo_consistency():
    lam, a_bar, sigma = 0.5, 3e7, 5e6
    rng = np.random.default_rng(0)
    arrived, sizes = _simulate_arrivals(lam, a_bar, sigma, 2000, rng)
    desc = discover(_history_from_arrivals(arrived, sizes), 1e-21, 5e6)
    assert abs(desc.lambda_hat - lam) <= 0.05 * lam
    assert abs(desc.a_bar_hat - a_bar) <= 0.05 * a_bar
    assert abs(desc.sigma_sq_hat - sigma**2) <= 0.05 * sigma**2


def test_feature_embed_deterministic_and_coordinatewise():
    env_a = EnvironmentParams(0.5, A_REF, (5e6) ** 2, KAPPA_REF, EPS_REF)
    env_b = EnvironmentParams(0.9, A_REF, (5e6) ** 2, KAPPA_REF, EPS_REF)
    phi_a, phi_b = feature_embed(env_a), feature_embed(env_b)
    assert np.array_equal(phi_a, feature_embed(env_a))
    diff = np.flatnonzero(phi_a != phi_b)
    assert list(diff) == [0]
    assert phi_a[0] == 0.5 and phi_a[1] == 1.0 and phi_a[5] == 1.0
    assert len(phi_a) == 6


def test_detect_change_basics():
    base = EnvironmentDescriptor(0.2, 3e7, (5e6) ** 2, 1e-21, 5e6)
    same = EnvironmentDescriptor(0.2, 3e7, (5e6) ** 2, 1e-21, 5e6)
    jumped = EnvironmentDescriptor(0.8, 3e7, (5e6) ** 2, 1e-21, 5e6)
    assert not detect_change(base, same, 0.1)
    assert detect_change(base, jumped, 0.1)  # distance 0.6 in coordinate 0


def test_detect_change_false_positive_rate():
    lam, a_bar, sigma = 0.5, 3e7, 5e6
    false_hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        d1 = discover(_history_from_arrivals(
            *_simulate_arrivals(lam, a_bar, sigma, 2000, rng)), 1e-21, 5e6)
        d2 = discover(_history_from_arrivals(
            *_simulate_arrivals(lam, a_bar, sigma, 2000, rng)), 1e-21, 5e6)
        false_hits += detect_change(d1, d2, 0.15)
    assert false_hits <= 5


def test_locate_change_finds_lambda_jump():
    rng = np.random.default_rng(3)
    a1, s1 = _simulate_arrivals(0.1, 3e7, 5e6, 150, rng)
    a2, s2 = _simulate_arrivals(0.9, 3e7, 5e6, 150, rng)
    hist = _history_from_arrivals(np.concatenate([a1, a2]),
                                  np.concatenate([s1, s2]))
    split = locate_change(hist, 1e-21, 5e6, n_candidates=12)
    assert split is not None
    assert abs(split - 150) <= 40


def test_locate_change_short_window():
    hist = _history_from_arrivals([True] * 10, [1e7] * 10)
    assert locate_change(hist, 1e-21, 5e6) is None


# ---------------------------------------------------------------------------
# weighted lasso


def test_lasso_orthonormal_no_penalty_is_projection():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(8, 4)))
    beta = rng.normal(size=8)
    s = weighted_lasso(q, beta, None, eta2=0.0)
    assert np.allclose(s, q.T @ beta, atol=1e-10)


def test_lasso_full_shrinkage():
    rng = np.random.default_rng(1)
    K = rng.normal(size=(8, 4))
    beta = rng.normal(size=8)
    s = weighted_lasso(K, beta, None, eta2=1e6)
    assert np.array_equal(s, np.zeros(4))


def _exhaustive_support_oracle(K, beta, Q, k):
    """Best weighted least-squares fit over every support of size <= k."""
    from itertools import combinations
    h = K.shape[1]
    Qm = np.eye(K.shape[0]) if Q is None else Q
    best = (np.inf, ())
    for size in range(k + 1):
        for support in combinations(range(h), size):
            if support:
                Ks = K[:, support]
                sol, *_ = np.linalg.lstsq(Ks.T @ Qm @ Ks, Ks.T @ Qm @ beta,
                                          rcond=None)
                resid = beta - Ks @ sol
            else:
                resid = beta
            loss = float(resid @ Qm @ resid)
            if loss < best[0] - 1e-12:
                best = (loss, support)
    return set(best[1])


def test_lasso_support_recovery_against_exhaustive_oracle():
    rng = np.random.default_rng(7)
    K = rng.normal(size=(8, 4))
    s_true = np.zeros(4)
    s_true[[1, 3]] = [1.2, -0.7]
    beta = K @ s_true
    s = weighted_lasso(K, beta, None, eta2=1e-4)
    support = set(np.flatnonzero(np.abs(s) > 1e-8))
    assert support == _exhaustive_support_oracle(K, beta, None, 2)
    assert np.allclose(s[[1, 3]], s_true[[1, 3]], atol=1e-3)


def test_lasso_kkt_residual_small():
    rng = np.random.default_rng(9)
    for _ in range(20):
        K = rng.normal(size=(8, 4))
        beta = rng.normal(size=8)
        gamma = rng.normal(size=(2, 2))
        Q = stack_weights(gamma @ gamma.T + 0.01 * np.eye(2), eta1=1.0)
        s = weighted_lasso(K, beta, Q, eta2=1e-3)
        assert lasso_kkt_residual(K, beta, Q, 1e-3, s) < 1e-6


def test_lasso_rejects_indefinite_weights():
    K = np.ones((8, 4))
    Q = -np.eye(8)
    with pytest.raises(ValueError):
        weighted_lasso(K, np.ones(8), Q, 1e-3)


def test_lasso_ignores_dead_columns():
    rng = np.random.default_rng(3)
    K = rng.normal(size=(6, 4))
    K[:, 2] = 0.0
    beta = rng.normal(size=6)
    s = weighted_lasso(K, beta, None, 1e-3)
    assert s[2] == 0.0
    assert lasso_kkt_residual(K, beta, None, 1e-3, s) < 1e-6


# ---------------------------------------------------------------------------
# dictionary updates


def _random_contribution(rng, d=2, d_z=6):
    alpha = rng.normal(size=d)
    g = rng.normal(size=(d, d))
    gamma = g @ g.T + 0.1 * np.eye(d)
    phi = rng.normal(size=d_z)
    s = np.zeros(4)
    s[rng.choice(4, size=2, replace=False)] = rng.normal(size=2)
    return alpha, gamma, phi, s


def test_single_env_reproduces_alpha():
    rng = np.random.default_rng(0)
    alpha = np.array([0.7, -1.1])
    phi = rng.normal(size=6)
    s = np.array([1.0, 0.5, 0.0, 0.0])
    dicts = CoupledDictionaries()
    dicts = update_dictionary(dicts, s, alpha, np.eye(2), phi, True,
                              eta1=1.0, eta3=1e-12, key="a")
    assert np.allclose(dicts.L @ s, alpha, atol=1e-6)
    assert np.allclose(dicts.D @ s, phi, atol=1e-6)


def test_revisit_with_identical_tuple_is_identity():
    rng = np.random.default_rng(1)
    dicts = CoupledDictionaries()
    alpha, gamma, phi, s = _random_contribution(rng)
    dicts = update_dictionary(dicts, s, alpha, gamma, phi, True, 1.0, 1e-4, key="k")
    before_l, before_d = dicts.L.copy(), dicts.D.copy()
    dicts = update_dictionary(dicts, s, alpha, gamma, phi, False, 1.0, 1e-4, key="k")
    assert np.allclose(dicts.L, before_l, atol=1e-12)
    assert np.allclose(dicts.D, before_d, atol=1e-12)
    assert dicts.env_count == 1


def test_revisit_unknown_key_rejected():
    dicts = CoupledDictionaries()
    rng = np.random.default_rng(2)
    alpha, gamma, phi, s = _random_contribution(rng)
    with pytest.raises(KeyError):
        update_dictionary(dicts, s, alpha, gamma, phi, False, 1.0, 1e-4, key="nope")


def _batch_oracle(contribs, eta1, eta3, d, d_z, h):
    """Stacked ridge least squares over the full multi-environment loss."""
    def solve(pairs, weight_rows):
        rows, targets = [], []
        z = len(pairs)
        for (vec, w_half, s) in pairs:
            rows.append(np.kron(s[None, :], w_half) / np.sqrt(z))
            targets.append(w_half @ vec / np.sqrt(z))
        dim = rows[0].shape[1]
        rows.append(np.sqrt(eta3) * np.eye(dim))
        targets.append(np.zeros(dim))
        sol, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(targets),
                                  rcond=None)
        return sol.reshape((weight_rows, h), order="F")

    pairs_l = []
    pairs_d = []
    for c in contribs:
        w, v = np.linalg.eigh(c.gamma)
        half = (v * np.sqrt(np.clip(w, 0, None))) @ v.T
        pairs_l.append((c.alpha, half, c.s))
        pairs_d.append((c.phi, np.sqrt(eta1) * np.eye(d_z), c.s))
    return solve(pairs_l, d), solve(pairs_d, d_z)


def test_incremental_matches_batch_oracle():
    rng = np.random.default_rng(5)
    dicts = CoupledDictionaries()
    for k in range(10):
        alpha, gamma, phi, s = _random_contribution(rng)
        dicts = update_dictionary(dicts, s, alpha, gamma, phi, True,
                                  eta1=1.0, eta3=1e-4, key=k)
    l_star, d_star = _batch_oracle(list(dicts.contributions.values()),
                                   1.0, 1e-4, 2, 6, 4)
    assert np.linalg.norm(dicts.L - l_star) <= 1e-6 * max(np.linalg.norm(l_star), 1)
    assert np.linalg.norm(dicts.D - d_star) <= 1e-6 * max(np.linalg.norm(d_star), 1)


def test_dictionary_update_does_not_increase_batch_objective():
    rng = np.random.default_rng(6)
    dicts = CoupledDictionaries()
    for k in range(6):
        alpha, gamma, phi, s = _random_contribution(rng)
        before = batch_objective(dicts.L, dicts.D,
                                 list(dicts.contributions.values()) +
                                 [type("C", (), {"s": s, "alpha": alpha,
                                                 "gamma": gamma, "phi": phi})()],
                                 1.0, 0.0, 1e-4)
        dicts = update_dictionary(dicts, s, alpha, gamma, phi, True, 1.0, 1e-4, key=k)
        after = batch_objective(dicts.L, dicts.D,
                                list(dicts.contributions.values()),
                                1.0, 0.0, 1e-4)
        assert after <= before + 1e-9


def test_code_fit_does_not_increase_code_objective():
    rng = np.random.default_rng(8)
    dicts = CoupledDictionaries()
    for k in range(5):
        alpha, gamma, phi, s = _random_contribution(rng)
        dicts = reinit_zero_columns(dicts, alpha, phi)
        target = stack_target(alpha, phi)
        weights = stack_weights(gamma, 1.0)
        fitted = fit_sparse_code(dicts, target, weights, 1e-3)
        K = dicts.stacked()
        previous = code_objective(K, s, target, weights, 1e-3)
        now = code_objective(K, fitted.s, target, weights, 1e-3)
        assert now <= previous + 1e-9
        dicts = update_dictionary(dicts, fitted, alpha, gamma, phi, True,
                                  1.0, 1e-4, key=k)


def test_accumulator_audit_exact():
    rng = np.random.default_rng(10)
    dicts = CoupledDictionaries()
    for k in range(8):
        alpha, gamma, phi, s = _random_contribution(rng)
        new_env = k < 5 or rng.random() < 0.5
        key = k if new_env else rng.integers(0, k)
        if not new_env and key not in dicts.contributions:
            new_env = True
        dicts = update_dictionary(dicts, s, alpha, gamma, phi, bool(new_env),
                                  1.0, 1e-4, key=int(key) if not new_env else k)
    assert audit_accumulators(dicts, eta1=1.0) <= 1e-9


def test_reinit_zero_columns_fresh_and_partial():
    alpha = np.array([3.0, 4.0])
    phi = np.arange(1.0, 7.0)
    dicts = CoupledDictionaries()
    out = reinit_zero_columns(dicts, alpha, phi)
    assert np.allclose(out.L[:, 0], alpha / 5.0)
    assert np.allclose(out.D[:, 0], phi / np.linalg.norm(phi))
    # all columns were dead, so all get the same direction
    assert np.allclose(out.L, np.tile((alpha / 5.0)[:, None], (1, 4)))

    out.L[:, 2] = 0.0
    out.D[:, 2] = 0.0
    partial = reinit_zero_columns(out, np.array([0.0, 2.0]), phi)
    assert np.allclose(partial.L[:, 2], [0.0, 1.0])
    assert np.allclose(partial.L[:, 0], out.L[:, 0])  # untouched

    untouched = reinit_zero_columns(partial, np.array([9.0, 9.0]), phi)
    assert np.allclose(untouched.L, partial.L)


def test_zero_shot_untrained_rejected():
    dicts = CoupledDictionaries()
    desc = EnvironmentDescriptor(0.5, 3e7, (5e6) ** 2, 1e-21, 5e6)
    with pytest.raises(RuntimeError):
        zero_shot(dicts, desc, 1e-3)


def test_zero_shot_zero_feature_base_gives_zero_policy():
    dicts = CoupledDictionaries()
    dicts.env_count = 1
    desc = EnvironmentDescriptor(0.5, 3e7, (5e6) ** 2, 1e-21, 5e6)
    pol = zero_shot(dicts, desc, 1e-3)
    assert np.array_equal(pol.theta, np.zeros(2))


def test_zero_shot_replays_trained_environment():
    rng = np.random.default_rng(12)
    dicts = CoupledDictionaries()
    descs, codes = [], []
    for k in range(8):
        lam = rng.uniform(0.1, 0.9)
        a_bar = rng.uniform(1e7, 5e7)
        eps = rng.uniform(3e6, 8e6)
        desc = EnvironmentDescriptor(lam, a_bar, (5e6) ** 2, 1e-21, eps)
        alpha = np.array([0.2 + lam, a_bar / 5e7])
        gamma = np.eye(2) * 5.0
        phi = desc.phi
        dicts = reinit_zero_columns(dicts, alpha, phi)
        code = fit_sparse_code(dicts, stack_target(alpha, phi),
                               stack_weights(gamma, 1.0), 1e-3)
        dicts = update_dictionary(dicts, code, alpha, gamma, phi, True,
                                  1.0, 1e-4, key=k)
        descs.append(desc)
        codes.append(code.s)
    # refit the replay code against the final dictionaries
    target = descs[3]
    s_replay = fit_sparse_code(dicts, stack_target(dicts.L @ codes[3], target.phi),
                               stack_weights(np.eye(2) * 5.0, 1.0), 1e-3).s
    reference = dicts.L @ s_replay
    warm = zero_shot(dicts, target, 1e-3)
    assert np.linalg.norm(warm.theta - reference) <= 0.10 * max(
        np.linalg.norm(reference), 1e-9)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    dicts = CoupledDictionaries()
    for k in range(4):
        alpha, gamma, phi, s = _random_contribution(rng)
        dicts = update_dictionary(dicts, s, alpha, gamma, phi, True, 1.0, 1e-4, key=k)
    path = tmp_path / "dicts.json"
    save_checkpoint(dicts, path)
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.L, dicts.L)
    assert np.array_equal(loaded.D, dicts.D)
    assert np.array_equal(loaded.A_L, dicts.A_L)
    assert loaded.env_count == dicts.env_count
    assert set(loaded.contributions) == {str(k) for k in range(4)}
    assert audit_accumulators(loaded, eta1=1.0) <= 1e-9


def test_descriptor_from_arrivals_validates():
    with pytest.raises(ValueError):
        descriptor_from_arrivals(np.array([], dtype=bool), np.array([]), 1e-21, 5e6)
