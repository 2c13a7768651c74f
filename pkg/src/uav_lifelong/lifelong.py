"""Coupled-dictionary lifelong learning with zero-shot policy transfer.

Two dictionaries share one sparse code per environment: L (policy base,
d x h) reconstructs trained policies as theta = L s, and D (feature base,
d_z x h) reconstructs environment feature embeddings as phi = D s. Codes
are fitted by a weighted Lasso; the dictionaries are refreshed in closed
form from running accumulators, so each new environment costs one small
ridge solve instead of a pass over all past data. A revisited environment
first has its previous rank-one contribution subtracted, then re-added
with the new estimates.

For an unseen environment, fitting a code to its estimated feature
embedding alone (no policy training) and mapping it through L yields a
warm-start policy: zero-shot transfer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .policy import InteractionHistory, LinearPolicy

# Feature-embedding normalization constants (environment parameter scales).
A_REF = 5e7
KAPPA_REF = 1e-21
EPS_REF = 8e6
D_Z = 6

SUPPORT_EPS = 1e-8


# ---------------------------------------------------------------------------
# Environment discovery


@dataclass
class EnvironmentDescriptor:
    """Estimated environment tuple plus the device constants.

    ``low_confidence`` marks windows with no arrivals, where the size
    moments default to zero and should not be trusted.
    """

    lambda_hat: float
    a_bar_hat: float
    sigma_sq_hat: float
    kappa: float
    eps_max: float
    low_confidence: bool = False

    @property
    def phi(self) -> np.ndarray:
        return feature_embed(self)


def _env_five_tuple(obj) -> tuple[float, float, float, float, float]:
    if hasattr(obj, "lambda_hat"):
        return (obj.lambda_hat, obj.a_bar_hat, obj.sigma_sq_hat, obj.kappa, obj.eps_max)
    return (obj.lam, obj.a_bar, obj.sigma_sq, obj.kappa, obj.eps_max)


def feature_embed(env) -> np.ndarray:
    """Normalized feature embedding of an environment tuple.

    Accepts EnvironmentParams or EnvironmentDescriptor. Coordinates:
    (lambda, a_bar/A_REF, sigma_sq/A_REF^2, kappa/KAPPA_REF,
    eps_max/EPS_REF, 1); the trailing bias makes d_z = 6.
    """
    lam, a_bar, sigma_sq, kappa, eps_max = _env_five_tuple(env)
    phi = np.array([
        lam,
        a_bar / A_REF,
        sigma_sq / (A_REF * A_REF),
        kappa / KAPPA_REF,
        eps_max / EPS_REF,
        1.0,
    ])
    if not np.all(np.isfinite(phi)):
        raise ValueError("environment features must be finite")
    return phi


def descriptor_from_arrivals(arrived: np.ndarray, sizes: np.ndarray,
                             kappa: float, eps_max: float) -> EnvironmentDescriptor:
    """Estimate the environment tuple from per-slot arrival records.

    Arrival probability is the fraction of slots with an arrival; size
    mean/variance are the sample moments of the recorded arrival sizes.
    """
    arrived = np.asarray(arrived, dtype=bool)
    n = arrived.size
    if n < 1:
        raise ValueError("need at least one slot of records")
    arrivals = np.asarray(sizes, dtype=float)[arrived]
    lam_hat = arrivals.size / n
    if arrivals.size == 0:
        return EnvironmentDescriptor(0.0, 0.0, 0.0, kappa, eps_max, low_confidence=True)
    a_hat = float(arrivals.mean())
    var_hat = float(((arrivals - a_hat) ** 2).mean())
    return EnvironmentDescriptor(lam_hat, a_hat, var_hat, kappa, eps_max)


def discover(history: InteractionHistory, kappa: float, eps_max: float) -> EnvironmentDescriptor:
    """Estimate the environment tuple from one interaction window."""
    return descriptor_from_arrivals(history.arrived, history.sizes, kappa, eps_max)


def detect_change(prev: EnvironmentDescriptor, cur: EnvironmentDescriptor,
                  threshold: float = 0.15) -> bool:
    """Flag an environment change when the feature embeddings moved more
    than ``threshold`` (bias coordinate excluded)."""
    diff = cur.phi[:-1] - prev.phi[:-1]
    return float(np.linalg.norm(diff)) > threshold


def locate_change(history: InteractionHistory, kappa: float, eps_max: float,
                  n_candidates: int = 8, min_side: int = 20) -> int | None:
    """Coarse change-point scan inside one window.

    Splits the window at a grid of candidate slots, estimates descriptors
    on each side and returns the relative slot index of the split with the
    largest feature separation, or None when the window is too short.
    """
    n = len(history)
    if n < 2 * min_side:
        return None
    candidates = np.unique(np.linspace(min_side, n - min_side, n_candidates).astype(int))
    best_k, best_sep = None, -1.0
    for k in candidates:
        left = descriptor_from_arrivals(history.arrived[:k], history.sizes[:k],
                                        kappa, eps_max)
        right = descriptor_from_arrivals(history.arrived[k:], history.sizes[k:],
                                         kappa, eps_max)
        sep = float(np.linalg.norm(right.phi[:-1] - left.phi[:-1]))
        if sep > best_sep:
            best_sep, best_k = sep, int(k)
    return best_k


# ---------------------------------------------------------------------------
# Weighted Lasso


@dataclass
class SparseCode:
    s: np.ndarray

    @property
    def support_size(self) -> int:
        return int(np.sum(np.abs(self.s) > SUPPORT_EPS))


def _support_solve(G: np.ndarray, c: np.ndarray, s: np.ndarray,
                   thresh: float) -> np.ndarray | None:
    """Exact minimizer restricted to the current support, if consistent.

    On a fixed support with fixed signs the Lasso reduces to a linear
    system; the result is the global optimum when the solved coefficients
    keep their signs and every excluded coordinate satisfies its
    subgradient bound. Returns None when the guess is inconsistent.
    """
    support = np.flatnonzero(s)
    full = np.zeros_like(s)
    if support.size:
        signs = np.sign(s[support])
        try:
            sol = np.linalg.solve(G[np.ix_(support, support)],
                                  c[support] - thresh * signs)
        except np.linalg.LinAlgError:
            return None
        if np.any(np.sign(sol) != signs):
            return None
        full[support] = sol
    grad = G @ full - c
    excluded = np.setdiff1d(np.arange(len(s)), support)
    if excluded.size and np.any(np.abs(grad[excluded]) > thresh * (1 + 1e-9)):
        return None
    return full


def weighted_lasso(K: np.ndarray, target: np.ndarray, Q: np.ndarray | None,
                   eta2: float, tol: float = 1e-8, max_sweeps: int = 10_000) -> np.ndarray:
    """argmin_s ||target - K s||^2_Q + eta2 ||s||_1 by coordinate descent.

    Q=None means the identity weighting; otherwise Q must be PSD. The
    cyclic soft-threshold updates run on the Gram form (K^T Q K, K^T Q b),
    with a periodic exact solve on the active support that short-circuits
    slow crawls on ill-conditioned weightings. Convergence is declared
    when a full sweep moves no coordinate by more than ``tol``.
    """
    K = np.asarray(K, dtype=float)
    target = np.asarray(target, dtype=float)
    if Q is None:
        G = K.T @ K
        c = K.T @ target
    else:
        Q = np.asarray(Q, dtype=float)
        w = np.linalg.eigvalsh(Q)
        if w.min() < -1e-10 * max(1.0, float(np.abs(w).max())):
            raise ValueError("weight matrix must be positive semi-definite")
        qk = Q @ K
        G = K.T @ qk
        c = qk.T @ target
    h = len(c)
    diag = G.diagonal().copy()
    dead = diag <= 1e-14 * max(float(diag.max(initial=0.0)), 1.0)
    thresh = eta2 / 2.0
    s = np.zeros(h)
    g_s = np.zeros(h)  # G @ s, maintained incrementally
    for sweep in range(max_sweeps):
        max_step = 0.0
        for j in range(h):
            if dead[j]:
                continue
            rho = c[j] - (g_s[j] - diag[j] * s[j])
            new = math.copysign(max(abs(rho) - thresh, 0.0), rho) / diag[j]
            delta = new - s[j]
            if delta != 0.0:
                g_s += G[:, j] * delta
                s[j] = new
                if abs(delta) > max_step:
                    max_step = abs(delta)
        if max_step < tol:
            break
        if (sweep + 1) % 25 == 0:
            exact = _support_solve(G, c, s, thresh)
            if exact is not None:
                return exact
    return s


def lasso_kkt_residual(K: np.ndarray, target: np.ndarray, Q: np.ndarray | None,
                       eta2: float, s: np.ndarray) -> float:
    """Largest violation of the Lasso subgradient conditions at ``s``."""
    K = np.asarray(K, dtype=float)
    target = np.asarray(target, dtype=float)
    resid = target - K @ s
    grad = 2.0 * (K.T @ (resid if Q is None else Q @ resid))
    worst = 0.0
    for j, sj in enumerate(s):
        if abs(sj) > SUPPORT_EPS:
            worst = max(worst, abs(grad[j] - eta2 * np.sign(sj)))
        else:
            worst = max(worst, max(0.0, abs(grad[j]) - eta2))
    return worst


def code_objective(K: np.ndarray, s: np.ndarray, target: np.ndarray,
                   Q: np.ndarray | None, eta2: float) -> float:
    """The code-fitting loss ||target - K s||^2_Q + eta2 ||s||_1."""
    r = np.asarray(target, dtype=float) - np.asarray(K, dtype=float) @ s
    quad = float(r @ r) if Q is None else float(r @ (Q @ r))
    return quad + eta2 * float(np.abs(s).sum())


# ---------------------------------------------------------------------------
# Coupled dictionaries


@dataclass
class EnvContribution:
    """The rank-one statistics one environment currently contributes."""

    s: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray


@dataclass
class CoupledDictionaries:
    """Shared policy/feature bases plus their closed-form accumulators.

    A_L/b_L (and A_D/b_D) accumulate the normal equations of the ridge
    problems that define L and D given all absorbed codes; ``env_count``
    is the number of distinct environments absorbed; ``contributions``
    remembers each environment's current rank-one terms so a revisit can
    be swapped out exactly.
    """

    d: int = 2
    d_z: int = D_Z
    h: int = 4
    L: np.ndarray = None
    D: np.ndarray = None
    A_L: np.ndarray = None
    b_L: np.ndarray = None
    A_D: np.ndarray = None
    b_D: np.ndarray = None
    env_count: int = 0
    contributions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.L is None:
            self.L = np.zeros((self.d, self.h))
        if self.D is None:
            self.D = np.zeros((self.d_z, self.h))
        if self.A_L is None:
            self.A_L = np.zeros((self.d * self.h, self.d * self.h))
        if self.b_L is None:
            self.b_L = np.zeros(self.d * self.h)
        if self.A_D is None:
            self.A_D = np.zeros((self.d_z * self.h, self.d_z * self.h))
        if self.b_D is None:
            self.b_D = np.zeros(self.d_z * self.h)

    def copy(self) -> "CoupledDictionaries":
        return CoupledDictionaries(
            d=self.d, d_z=self.d_z, h=self.h,
            L=self.L.copy(), D=self.D.copy(),
            A_L=self.A_L.copy(), b_L=self.b_L.copy(),
            A_D=self.A_D.copy(), b_D=self.b_D.copy(),
            env_count=self.env_count,
            contributions={k: EnvContribution(c.s.copy(), c.alpha.copy(),
                                              c.gamma.copy(), c.phi.copy())
                           for k, c in self.contributions.items()},
        )

    def stacked(self) -> np.ndarray:
        return np.vstack([self.L, self.D])


def stack_target(alpha: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(alpha, float), np.asarray(phi, float)])


def stack_weights(gamma: np.ndarray, eta1: float, d_z: int = D_Z) -> np.ndarray:
    d = gamma.shape[0]
    Q = np.zeros((d + d_z, d + d_z))
    Q[:d, :d] = gamma
    Q[d:, d:] = eta1 * np.eye(d_z)
    return Q


def fit_sparse_code(dicts: CoupledDictionaries, beta_stack: np.ndarray,
                    Q_stack: np.ndarray, eta2: float) -> SparseCode:
    """Fit the shared sparse code against the stacked dictionaries."""
    return SparseCode(weighted_lasso(dicts.stacked(), beta_stack, Q_stack, eta2))


def _vec(m: np.ndarray) -> np.ndarray:
    return np.ravel(m, order="F")


def _mat(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.reshape(v, (rows, cols), order="F")


def _rank_one_terms(s, alpha, gamma):
    outer_s = np.outer(s, s)
    return np.kron(outer_s, gamma), _vec(gamma @ np.outer(alpha, s))


def update_dictionary(dicts: CoupledDictionaries, s, alpha, gamma, phi,
                      is_new_env: bool, eta1: float, eta3: float,
                      key=None) -> CoupledDictionaries:
    """Absorb one environment's (s, alpha, gamma, phi) into L and D.

    A revisit (``is_new_env`` False) first removes the contribution stored
    under ``key``; a new environment bumps the environment count. Both
    dictionaries are then recomputed from their accumulators by one
    regularized solve each.
    """
    s = np.asarray(getattr(s, "s", s), dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    phi = np.asarray(phi, dtype=float)
    new = dicts.copy()
    eye_dz = np.eye(new.d_z)

    if is_new_env:
        new.env_count += 1
    else:
        if key not in new.contributions:
            raise KeyError(f"revisit of unknown environment key {key!r}")
        prev = new.contributions[key]
        a_prev, b_prev = _rank_one_terms(prev.s, prev.alpha, prev.gamma)
        new.A_L -= a_prev
        new.b_L -= b_prev
        a_prev_d, b_prev_d = _rank_one_terms(prev.s, prev.phi, eta1 * eye_dz)
        new.A_D -= a_prev_d
        new.b_D -= b_prev_d

    a_term, b_term = _rank_one_terms(s, alpha, gamma)
    new.A_L += a_term
    new.b_L += b_term
    a_term_d, b_term_d = _rank_one_terms(s, phi, eta1 * eye_dz)
    new.A_D += a_term_d
    new.b_D += b_term_d

    z = new.env_count
    if z < 1:
        raise ValueError("dictionary update before any environment was counted")
    try:
        sol_l = np.linalg.solve(new.A_L / z + eta3 * np.eye(new.d * new.h), new.b_L / z)
        sol_d = np.linalg.solve(new.A_D / z + eta3 * np.eye(new.d_z * new.h), new.b_D / z)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"singular dictionary system (eta3={eta3}); increase eta3"
        ) from exc
    new.L = _mat(sol_l, new.d, new.h)
    new.D = _mat(sol_d, new.d_z, new.h)
    new.contributions[key] = EnvContribution(s.copy(), alpha.copy(),
                                             gamma.copy(), phi.copy())
    return new


def reinit_zero_columns(dicts: CoupledDictionaries, latest_alpha,
                        latest_phi) -> CoupledDictionaries:
    """Replace dead (all-zero) columns of L, and their paired columns of D,
    with the directions of the latest policy and feature estimates."""
    latest_alpha = np.asarray(latest_alpha, dtype=float)
    latest_phi = np.asarray(latest_phi, dtype=float)
    a_norm = float(np.linalg.norm(latest_alpha))
    p_norm = float(np.linalg.norm(latest_phi))
    scale = max(1.0, float(np.abs(dicts.L).max()))
    new = dicts.copy()
    for j in range(new.h):
        if np.linalg.norm(new.L[:, j]) <= 1e-12 * scale:
            if a_norm > 1e-12:
                new.L[:, j] = latest_alpha / a_norm
            if p_norm > 1e-12:
                new.D[:, j] = latest_phi / p_norm
    return new


def zero_shot(dicts: CoupledDictionaries, descriptor: EnvironmentDescriptor,
              eta2: float, sigma_z: float = 4e5) -> LinearPolicy:
    """Warm-start policy for an unseen environment from its features alone.

    Fits a code to the estimated feature embedding against D (identity
    weighting) and maps it through the policy base.
    """
    if dicts.env_count < 1:
        raise RuntimeError("zero-shot transfer requires trained dictionaries")
    s = weighted_lasso(dicts.D, descriptor.phi, None, eta2)
    return LinearPolicy(dicts.L @ s, sigma_z)


def batch_objective(L: np.ndarray, D: np.ndarray, contribs, eta1: float,
                    eta2: float, eta3: float) -> float:
    """Multi-environment loss for fixed codes: the quantity the closed-form
    dictionary refresh minimizes over (L, D)."""
    z = len(contribs)
    total = 0.0
    for c in contribs:
        r_l = c.alpha - L @ c.s
        r_d = c.phi - D @ c.s
        total += float(r_l @ (c.gamma @ r_l)) + eta1 * float(r_d @ r_d)
        total += eta2 * float(np.abs(c.s).sum())
    total /= max(z, 1)
    total += eta3 * (float(np.sum(L * L)) + float(np.sum(D * D)))
    return total


def audit_accumulators(dicts: CoupledDictionaries, eta1: float) -> float:
    """Largest absolute discrepancy between the live accumulators and a
    recomputation from the contribution log."""
    a_l = np.zeros_like(dicts.A_L)
    b_l = np.zeros_like(dicts.b_L)
    a_d = np.zeros_like(dicts.A_D)
    b_d = np.zeros_like(dicts.b_D)
    eye_dz = np.eye(dicts.d_z)
    for c in dicts.contributions.values():
        at, bt = _rank_one_terms(c.s, c.alpha, c.gamma)
        a_l += at
        b_l += bt
        at_d, bt_d = _rank_one_terms(c.s, c.phi, eta1 * eye_dz)
        a_d += at_d
        b_d += bt_d
    return max(
        float(np.abs(a_l - dicts.A_L).max(initial=0.0)),
        float(np.abs(b_l - dicts.b_L).max(initial=0.0)),
        float(np.abs(a_d - dicts.A_D).max(initial=0.0)),
        float(np.abs(b_d - dicts.b_D).max(initial=0.0)),
    )


def save_checkpoint(dicts: CoupledDictionaries, path) -> None:
    """Write a versioned JSON checkpoint (matrices row-major)."""
    payload = {
        "version": 1,
        "d": dicts.d,
        "d_z": dicts.d_z,
        "h": dicts.h,
        "env_count": dicts.env_count,
        "L": dicts.L.tolist(),
        "D": dicts.D.tolist(),
        "A_L": dicts.A_L.tolist(),
        "b_L": dicts.b_L.tolist(),
        "A_D": dicts.A_D.tolist(),
        "b_D": dicts.b_D.tolist(),
        "contributions": {
            str(k): {
                "s": c.s.tolist(),
                "alpha": c.alpha.tolist(),
                "gamma": c.gamma.tolist(),
                "phi": c.phi.tolist(),
            }
            for k, c in dicts.contributions.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> CoupledDictionaries:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    dicts = CoupledDictionaries(
        d=payload["d"], d_z=payload["d_z"], h=payload["h"],
        L=np.array(payload["L"]), D=np.array(payload["D"]),
        A_L=np.array(payload["A_L"]), b_L=np.array(payload["b_L"]),
        A_D=np.array(payload["A_D"]), b_D=np.array(payload["b_D"]),
        env_count=payload["env_count"],
    )
    for k, c in payload["contributions"].items():
        dicts.contributions[k] = EnvContribution(
            np.array(c["s"]), np.array(c["alpha"]),
            np.array(c["gamma"]), np.array(c["phi"]),
        )
    return dicts
