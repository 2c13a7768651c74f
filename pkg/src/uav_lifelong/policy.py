"""Linear Gaussian CPU-allocation policy and its policy-gradient learner.

The policy maps normalized device state x_hat = (aoi/AOI_REF, backlog/
BACKLOG_REF) to a CPU allocation: the mean action is theta . x_hat in units
of the device's cycle budget eps_max, plus Gaussian exploration noise in
raw cycles, clamped into [0, eps_max].

The base learner is episodic REINFORCE with a mean-reward baseline. All
likelihood quantities are computed in normalized action units (action /
eps_max, noise std sigma_z / eps_max), which keeps theta and its gradients
O(1). The learner also exposes the Gauss-Newton curvature proxy used as
the local Hessian of the objective around a trained policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .device import CostParams, drain_fifo
from .envsim import EnvironmentParams, truncated_normal

# State feature normalization. The caps keep pathological states (queue
# blow-ups under a bad policy) from dominating gradients and curvature.
AOI_REF = 50.0
BACKLOG_REF = 5e7
FEATURE_CAP = 4.0


def features(aoi, backlog) -> np.ndarray:
    """Normalized, capped state features; works on scalars or arrays."""
    a = np.minimum(np.asarray(aoi, dtype=float) / AOI_REF, FEATURE_CAP)
    b = np.minimum(np.asarray(backlog, dtype=float) / BACKLOG_REF, FEATURE_CAP)
    return np.stack([a, b], axis=-1)


@dataclass(frozen=True)
class LinearPolicy:
    """Gaussian policy over CPU cycles with a linear state-dependent mean."""

    theta: np.ndarray          # (2,) weights over normalized features
    sigma_z: float = 4e5       # exploration std, CPU cycles

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        if self.theta.shape != (2,):
            raise ValueError("theta must be a 2-vector (aoi, backlog weights)")
        if self.sigma_z <= 0:
            raise ValueError("sigma_z must be positive")


def act(policy: LinearPolicy, state, eps_max: float, rng: np.random.Generator) -> float:
    """Draw one CPU allocation, clamped into [0, eps_max]."""
    x = features(state.aoi, state.backlog)
    mean = float(policy.theta @ x) * eps_max
    draw = mean + policy.sigma_z * rng.standard_normal()
    return min(max(draw, 0.0), eps_max)


@dataclass
class InteractionHistory:
    """One contiguous window of device interaction records.

    Arrays are per-slot and equally long. ``action_scale`` is the eps_max
    that normalizes actions and ``sigma_z`` the exploration std (cycles)
    of the policy that produced them; both are needed to evaluate
    likelihood gradients after the fact.
    """

    device_id: int
    start_slot: int
    end_slot: int
    action_scale: float
    sigma_z: float
    aoi: np.ndarray
    backlog: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    arrived: np.ndarray
    sizes: np.ndarray
    backlog_next: np.ndarray

    def __post_init__(self):
        n = self.end_slot - self.start_slot
        if n <= 0:
            raise ValueError("history must span at least one slot")
        for name in ("aoi", "backlog", "actions", "rewards", "arrived",
                     "sizes", "backlog_next"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            setattr(self, name, arr)

    def __len__(self) -> int:
        return self.end_slot - self.start_slot

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())


@dataclass
class BaseLearnerResult:
    """Outcome of one base-learner run: best policy, local curvature,
    held-out mean reward and the per-step learning curve."""

    alpha: np.ndarray
    hessian: np.ndarray
    mean_reward: float
    reward_curve: list = field(default_factory=list)
    episodes_used: int = 0


def policy_gradient_step(policy: LinearPolicy, histories: list[InteractionHistory],
                         learn_rate: float) -> LinearPolicy:
    """One REINFORCE ascent step with a mean-reward baseline.

    The estimator averages, over histories, the summed score function
    times the history's centered mean reward; every action must have been
    generated by ``policy``.
    """
    if not histories:
        raise ValueError("need at least one interaction history")
    mean_rewards = np.array([h.mean_reward for h in histories])
    baseline = mean_rewards.mean()
    grad = np.zeros(2)
    for hist, r_bar in zip(histories, mean_rewards):
        x = features(hist.aoi, hist.backlog)                  # (n, 2)
        sigma_n = hist.sigma_z / hist.action_scale
        resid = hist.actions / hist.action_scale - x @ policy.theta
        score = (resid / sigma_n**2)[:, None] * x
        grad += score.sum(axis=0) * (r_bar - baseline)
    grad /= len(histories)
    return LinearPolicy(policy.theta + learn_rate * grad, policy.sigma_z)


def estimate_hessian(alpha: np.ndarray, histories: list[InteractionHistory]) -> np.ndarray:
    """Gauss-Newton curvature proxy of the objective around ``alpha``.

    Averages x_hat x_hat^T / sigma_n^2 over every recorded step: symmetric
    and positive semi-definite by construction, so the weighted policy
    norm it induces is well defined.
    """
    if not histories:
        raise ValueError("need at least one interaction history")
    acc = np.zeros((2, 2))
    total = 0
    for hist in histories:
        x = features(hist.aoi, hist.backlog)
        sigma_n = hist.sigma_z / hist.action_scale
        acc += x.T @ x / sigma_n**2
        total += len(hist)
    gamma = acc / total
    return 0.5 * (gamma + gamma.T)


class EpisodeSimulator:
    """Rolls out device-interaction episodes in one stationary environment.

    Episodes start from a fresh device (aoi=1, empty queue) and run for a
    fixed horizon. Owns its RNG stream, so concurrent simulators do not
    interfere.
    """

    def __init__(self, env: EnvironmentParams, cost_params: CostParams,
                 horizon: int, rng: np.random.Generator):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.env = env
        self.cost_params = cost_params
        self.horizon = horizon
        self.rng = rng

    def run(self, policy: LinearPolicy, n_episodes: int) -> list[InteractionHistory]:
        return [self._episode(policy) for _ in range(n_episodes)]

    def _episode(self, policy: LinearPolicy) -> InteractionHistory:
        env, n = self.env, self.horizon
        rng = self.rng
        lam, a_bar, kappa = env.lam, env.a_bar, env.kappa
        sigma_a = float(np.sqrt(env.sigma_sq))
        eps_max = env.eps_max
        beta = self.cost_params.beta
        th0, th1 = float(policy.theta[0]), float(policy.theta[1])
        sig = policy.sigma_z

        arrive_u = rng.random(n)
        noise = rng.standard_normal(n)

        aoi_a = np.empty(n)
        bkl_a = np.empty(n)
        act_a = np.empty(n)
        rew_a = np.empty(n)
        arr_a = np.zeros(n, dtype=bool)
        siz_a = np.zeros(n)
        nxt_a = np.empty(n)

        aoi = 1
        backlog = 0.0
        pending: list[list] = []
        for t in range(n):
            aoi_a[t] = aoi
            bkl_a[t] = backlog

            x0 = aoi / AOI_REF
            if x0 > FEATURE_CAP:
                x0 = FEATURE_CAP
            x1 = backlog / BACKLOG_REF
            if x1 > FEATURE_CAP:
                x1 = FEATURE_CAP
            cpu = (th0 * x0 + th1 * x1) * eps_max + sig * noise[t]
            if cpu < 0.0:
                cpu = 0.0
            elif cpu > eps_max:
                cpu = eps_max
            act_a[t] = cpu
            rew_a[t] = -(beta * aoi + (1.0 - beta) * kappa * cpu**3)

            if arrive_u[t] < lam:
                size = a_bar if sigma_a == 0.0 else truncated_normal(a_bar, sigma_a, rng)
                pending.append([size, t])
                arr_a[t] = True
                siz_a[t] = size
            completed = drain_fifo(pending, cpu)
            backlog = sum(rem for rem, _ in pending)
            nxt_a[t] = backlog
            aoi = (t + 1) - completed[-1] if completed else aoi + 1

        return InteractionHistory(
            device_id=-1, start_slot=0, end_slot=n,
            action_scale=eps_max, sigma_z=sig,
            aoi=aoi_a, backlog=bkl_a, actions=act_a, rewards=rew_a,
            arrived=arr_a, sizes=siz_a, backlog_next=nxt_a,
        )


def base_learn(env_simulator: EpisodeSimulator, initial: LinearPolicy,
               budget_episodes: int, *, learn_rate: float = 1e-2,
               episodes_per_step: int = 20, step_cap: float = 0.5,
               eval_episodes: int | None = None,
               alt_initials: tuple = ()) -> BaseLearnerResult:
    """REINFORCE until the episode budget runs out; keep the best policy.

    Each iteration rolls a batch, scores the current theta by the batch
    mean reward, then takes one gradient step (norm-capped to keep the
    noisy estimator from overshooting). The returned alpha is the best
    theta encountered; its curvature and mean reward come from a fresh
    evaluation batch rolled at alpha.

    ``alt_initials`` are alternative starting policies: all candidates are
    probed with one batch each (charged to the budget) and learning
    continues from the best, which lets a caller recover from a poisoned
    warm start without giving up on it when it is good.
    """
    if budget_episodes < 1:
        raise ValueError("budget_episodes must be >= 1")
    batch = min(episodes_per_step, budget_episodes)
    policy = initial
    best_theta = initial.theta.copy()
    best_reward = -np.inf
    curve = []
    spent = 0
    candidates = [initial, *alt_initials]
    if len(candidates) > 1 and spent + len(candidates) * batch <= budget_episodes:
        probe_rewards = []
        for cand in candidates:
            probe = env_simulator.run(cand, batch)
            spent += batch
            probe_rewards.append(float(np.mean([h.mean_reward for h in probe])))
        pick = int(np.argmax(probe_rewards))
        policy = candidates[pick]
        best_theta = policy.theta.copy()
        best_reward = probe_rewards[pick]
        curve.append(best_reward)
    while spent + batch <= budget_episodes:
        histories = env_simulator.run(policy, batch)
        spent += batch
        batch_reward = float(np.mean([h.mean_reward for h in histories]))
        curve.append(batch_reward)
        if batch_reward > best_reward:
            best_reward = batch_reward
            best_theta = policy.theta.copy()
        if learn_rate != 0.0:
            stepped = policy_gradient_step(policy, histories, learn_rate)
            delta = stepped.theta - policy.theta
            norm = float(np.linalg.norm(delta))
            if norm > step_cap:
                delta *= step_cap / norm
            policy = LinearPolicy(policy.theta + delta, policy.sigma_z)

    alpha = LinearPolicy(best_theta, initial.sigma_z)
    eval_hists = env_simulator.run(alpha, eval_episodes or batch)
    return BaseLearnerResult(
        alpha=best_theta,
        hessian=estimate_hessian(best_theta, eval_hists),
        mean_reward=float(np.mean([h.mean_reward for h in eval_hists])),
        reward_curve=curve,
        episodes_used=spent,
    )
