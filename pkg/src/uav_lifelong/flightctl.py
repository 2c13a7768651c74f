"""UAV destination-and-velocity controllers.

Four interchangeable policies share one interface: an actor-critic network
(the trained controller), a uniform-random baseline, a change-frequency
("force") heuristic, and an epsilon-greedy Q-network over discretized
actions. Controller state is the UAV location plus, per device, the slots
elapsed since that device's current environment began as far as the
controller knows.

The networks are small numpy MLPs with explicit backpropagation so the
gradients can be checked against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VELOCITY_GRID = (10.0, 20.0, 30.0, 40.0)
BASELINE_VELOCITY = 20.0


@dataclass
class UavState:
    """Controller view of the world: where the UAV is and how stale each
    device's known environment is (in slots)."""

    location: tuple[float, float]
    elapsed: np.ndarray

    def __post_init__(self):
        self.elapsed = np.asarray(self.elapsed, dtype=float)
        if np.any(self.elapsed < 0):
            raise ValueError("elapsed entries must be nonnegative")


@dataclass(frozen=True)
class UavAction:
    destination: int
    velocity: float


@dataclass(frozen=True)
class Transition:
    state: UavState
    action: UavAction
    reward: float
    next_state: UavState
    slots: int = 1  # decision duration; discounting is per slot


def state_features(state: UavState, region_side: float, elapsed_ref: float) -> np.ndarray:
    """Network inputs: normalized location followed by normalized elapsed
    times."""
    loc = np.asarray(state.location, dtype=float) / region_side
    return np.concatenate([loc, state.elapsed / elapsed_ref])


def _squash_velocity(raw: float, v_min: float, v_max: float) -> float:
    return v_min + (v_max - v_min) / (1.0 + math.exp(-raw))


def _unsquash_velocity(velocity: float, v_min: float, v_max: float) -> float:
    p = (velocity - v_min) / (v_max - v_min)
    p = min(max(p, 1e-9), 1.0 - 1e-9)
    return math.log(p / (1.0 - p))


class AcNetwork:
    """Two-hidden-layer tanh trunk with destination, velocity and value heads.

    Head weights start at zero, so an untrained network emits a uniform
    destination distribution and the midpoint velocity. The velocity head
    squashes into [v_min, v_max] by default (gradients stay alive at the
    bounds); ``hard_clamp_velocity`` restores plain clamping.
    """

    def __init__(self, n_devices: int, hidden: int = 64, v_min: float = 10.0,
                 v_max: float = 40.0, discount: float = 0.99,
                 learn_rate: float = 1e-3, velocity_noise: float = 0.5,
                 value_coef: float = 0.5, entropy_coef: float = 0.02,
                 region_side: float = 1000.0,
                 elapsed_ref: float = 500.0, hard_clamp_velocity: bool = False,
                 initial_velocity: float | None = None,
                 rng: np.random.Generator | None = None):
        if not 0.0 < discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        self.n_devices = n_devices
        self.hidden = hidden
        self.v_min = v_min
        self.v_max = v_max
        self.discount = discount
        self.learn_rate = learn_rate
        self.velocity_noise = velocity_noise
        self.value_coef = value_coef
        self.entropy_coef = entropy_coef
        self.region_side = region_side
        self.elapsed_ref = elapsed_ref
        self.hard_clamp_velocity = hard_clamp_velocity
        rng = rng or np.random.default_rng(0)
        n_in = n_devices + 2
        self.params = {
            "W1": rng.normal(0.0, 1.0 / math.sqrt(n_in), (hidden, n_in)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0.0, 1.0 / math.sqrt(hidden), (hidden, hidden)),
            "b2": np.zeros(hidden),
            "Wd": np.zeros((n_devices, hidden)),
            "bd": np.zeros(n_devices),
            "wv": np.zeros(hidden),
            "bv": 0.0 if initial_velocity is None else _unsquash_velocity(
                min(max(initial_velocity, v_min + 1e-6), v_max - 1e-6), v_min, v_max),
            "wc": np.zeros(hidden),
            "bc": 0.0,
        }

    def forward(self, x: np.ndarray):
        p = self.params
        h1 = np.tanh(p["W1"] @ x + p["b1"])
        h2 = np.tanh(p["W2"] @ h1 + p["b2"])
        logits = p["Wd"] @ h2 + p["bd"]
        v_raw = float(p["wv"] @ h2 + p["bv"])
        value = float(p["wc"] @ h2 + p["bc"])
        cache = (x, h1, h2)
        return logits, v_raw, value, cache

    def destination_probs(self, state: UavState) -> np.ndarray:
        logits, _, _, _ = self.forward(self.features(state))
        return _softmax(logits)

    def features(self, state: UavState) -> np.ndarray:
        return state_features(state, self.region_side, self.elapsed_ref)

    def value(self, state: UavState) -> float:
        _, _, value, _ = self.forward(self.features(state))
        return value

    def emit_velocity(self, v_raw: float) -> float:
        if self.hard_clamp_velocity:
            return min(max(v_raw, self.v_min), self.v_max)
        return _squash_velocity(v_raw, self.v_min, self.v_max)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def ac_select(net: AcNetwork, state: UavState, rng: np.random.Generator) -> UavAction:
    """Sample a destination from the softmax head and a velocity from the
    noisy, squashed velocity head."""
    logits, v_raw, _, _ = net.forward(net.features(state))
    probs = _softmax(logits)
    dest = int(rng.choice(net.n_devices, p=probs))
    noisy = v_raw + net.velocity_noise * rng.standard_normal()
    return UavAction(dest, net.emit_velocity(noisy))


def ac_loss_and_grads(net: AcNetwork, transition: Transition,
                      frozen_target: float | None = None,
                      frozen_advantage: float | None = None):
    """Combined actor-critic loss on one transition and its exact gradient.

    The bootstrap target and the advantage are treated as constants
    (semi-gradient); the actor term is the advantage-weighted negative
    log-likelihood of the taken action, the critic term the squared value
    error, blended with ``value_coef``. Passing ``frozen_target`` /
    ``frozen_advantage`` pins those constants explicitly, which is what a
    finite-difference check of the backpropagation needs.
    """
    reward = transition.reward
    if not math.isfinite(reward):
        raise ValueError("transition reward must be finite")
    x = net.features(transition.state)
    logits, v_raw, value, (x, h1, h2) = net.forward(x)
    if frozen_target is None:
        next_value = net.value(transition.next_state)
        target = reward + net.discount**transition.slots * next_value
    else:
        target = frozen_target
    advantage = (target - value) if frozen_advantage is None else frozen_advantage

    probs = _softmax(logits)
    dest = transition.action.destination
    log_probs = logits - logits.max()
    log_probs = log_probs - math.log(np.exp(log_probs).sum())
    sigma = net.velocity_noise
    if net.hard_clamp_velocity:
        u_taken = transition.action.velocity
    else:
        u_taken = _unsquash_velocity(transition.action.velocity, net.v_min, net.v_max)
    log_pi_v = -0.5 * ((u_taken - v_raw) / sigma) ** 2 - math.log(sigma) \
        - 0.5 * math.log(2.0 * math.pi)

    # entropy bonus keeps destination coverage until evidence accumulates;
    # a half-learned skew starves devices and costs more than uniform
    entropy = -float(probs @ np.log(probs + 1e-12))
    actor_loss = -advantage * (log_probs[dest] + log_pi_v) \
        - net.entropy_coef * entropy
    critic_loss = (value - target) ** 2
    loss = actor_loss + net.value_coef * critic_loss

    one_hot = np.zeros(net.n_devices)
    one_hot[dest] = 1.0
    d_logits = -advantage * (one_hot - probs) \
        + net.entropy_coef * probs * (np.log(probs + 1e-12) + entropy)
    d_v_raw = -advantage * (u_taken - v_raw) / sigma**2
    d_value = net.value_coef * 2.0 * (value - target)

    p = net.params
    grads = {}
    grads["Wd"] = np.outer(d_logits, h2)
    grads["bd"] = d_logits
    grads["wv"] = d_v_raw * h2
    grads["bv"] = d_v_raw
    grads["wc"] = d_value * h2
    grads["bc"] = d_value
    d_h2 = p["Wd"].T @ d_logits + d_v_raw * p["wv"] + d_value * p["wc"]
    d_a2 = d_h2 * (1.0 - h2 * h2)
    grads["W2"] = np.outer(d_a2, h1)
    grads["b2"] = d_a2
    d_h1 = p["W2"].T @ d_a2
    d_a1 = d_h1 * (1.0 - h1 * h1)
    grads["W1"] = np.outer(d_a1, x)
    grads["b1"] = d_a1
    return float(loss), grads


def ac_update(net: AcNetwork, transition: Transition) -> AcNetwork:
    """One SGD step on the combined actor-critic loss; returns the (same,
    updated) network."""
    _, grads = ac_loss_and_grads(net, transition)
    lr = net.learn_rate
    for name, grad in grads.items():
        net.params[name] = net.params[name] - lr * grad
    return net


class QNetwork:
    """One-hidden-layer Q function over N destinations x a velocity grid."""

    def __init__(self, n_devices: int, hidden: int = 64, discount: float = 0.99,
                 learn_rate: float = 1e-3, region_side: float = 1000.0,
                 elapsed_ref: float = 500.0,
                 velocity_grid: tuple = VELOCITY_GRID,
                 rng: np.random.Generator | None = None):
        self.n_devices = n_devices
        self.velocity_grid = tuple(velocity_grid)
        self.n_actions = n_devices * len(self.velocity_grid)
        self.discount = discount
        self.learn_rate = learn_rate
        self.region_side = region_side
        self.elapsed_ref = elapsed_ref
        rng = rng or np.random.default_rng(0)
        n_in = n_devices + 2
        self.params = {
            "W1": rng.normal(0.0, 1.0 / math.sqrt(n_in), (hidden, n_in)),
            "b1": np.zeros(hidden),
            "W2": np.zeros((self.n_actions, hidden)),
            "b2": np.zeros(self.n_actions),
        }

    def features(self, state: UavState) -> np.ndarray:
        return state_features(state, self.region_side, self.elapsed_ref)

    def q_values(self, state: UavState):
        x = self.features(state)
        h1 = np.tanh(self.params["W1"] @ x + self.params["b1"])
        return self.params["W2"] @ h1 + self.params["b2"], (x, h1)

    def action_index(self, action: UavAction) -> int:
        v_idx = int(np.argmin([abs(action.velocity - v) for v in self.velocity_grid]))
        return action.destination * len(self.velocity_grid) + v_idx

    def index_action(self, index: int) -> UavAction:
        dest, v_idx = divmod(index, len(self.velocity_grid))
        return UavAction(dest, self.velocity_grid[v_idx])


def qnet_select(qnet: QNetwork, state: UavState, rng: np.random.Generator,
                epsilon: float) -> UavAction:
    """Epsilon-greedy over the discrete destination x velocity grid."""
    if rng.random() < epsilon:
        return qnet.index_action(int(rng.integers(qnet.n_actions)))
    q, _ = qnet.q_values(state)
    return qnet.index_action(int(np.argmax(q)))


def qnet_loss_and_grads(qnet: QNetwork, transition: Transition,
                        frozen_target: float | None = None):
    """Squared TD error on one transition, with the bootstrap target held
    constant, and its gradient."""
    q, (x, h1) = qnet.q_values(transition.state)
    idx = qnet.action_index(transition.action)
    if frozen_target is None:
        q_next, _ = qnet.q_values(transition.next_state)
        target = transition.reward + qnet.discount**transition.slots * float(q_next.max())
    else:
        target = frozen_target
    err = q[idx] - target
    loss = err * err

    d_q = np.zeros(qnet.n_actions)
    d_q[idx] = 2.0 * err
    grads = {
        "W2": np.outer(d_q, h1),
        "b2": d_q,
    }
    d_h1 = qnet.params["W2"].T @ d_q
    d_a1 = d_h1 * (1.0 - h1 * h1)
    grads["W1"] = np.outer(d_a1, x)
    grads["b1"] = d_a1
    return float(loss), grads


def qnet_update(qnet: QNetwork, transition: Transition) -> QNetwork:
    _, grads = qnet_loss_and_grads(qnet, transition)
    for name, grad in grads.items():
        qnet.params[name] = qnet.params[name] - qnet.learn_rate * grad
    return qnet


def random_policy(n_devices: int, rng: np.random.Generator) -> UavAction:
    """Uniform destination at the fixed baseline velocity."""
    return UavAction(int(rng.integers(n_devices)), BASELINE_VELOCITY)


def force_policy(state: UavState, period_means: np.ndarray) -> UavAction:
    """Visit the device whose elapsed time is largest relative to how often
    its environment changes; ties break toward the lowest index."""
    ratios = state.elapsed / np.asarray(period_means, dtype=float)
    return UavAction(int(np.argmax(ratios)), BASELINE_VELOCITY)


# ---------------------------------------------------------------------------
# Uniform controller interface for the simulation harness


class Controller:
    """Decision interface the harness drives; baselines ignore updates."""

    trainable = False

    def select(self, state: UavState, rng: np.random.Generator) -> UavAction:
        raise NotImplementedError

    def update(self, transition: Transition) -> None:
        pass


class RandomController(Controller):
    def __init__(self, n_devices: int):
        self.n_devices = n_devices

    def select(self, state, rng):
        return random_policy(self.n_devices, rng)


class ForceController(Controller):
    def __init__(self, period_means):
        self.period_means = np.asarray(period_means, dtype=float)

    def select(self, state, rng):
        return force_policy(state, self.period_means)


class AcController(Controller):
    trainable = True

    def __init__(self, net: AcNetwork):
        self.net = net

    def select(self, state, rng):
        return ac_select(self.net, state, rng)

    def update(self, transition):
        ac_update(self.net, transition)


class QnetController(Controller):
    trainable = True

    def __init__(self, qnet: QNetwork, epsilon_start: float = 0.5,
                 epsilon_end: float = 0.05, epsilon_decay: float = 0.995):
        self.qnet = qnet
        self.epsilon = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay = epsilon_decay

    def select(self, state, rng):
        return qnet_select(self.qnet, state, rng, self.epsilon)

    def update(self, transition):
        qnet_update(self.qnet, transition)
        self.epsilon = max(self.epsilon_end, self.epsilon * self.epsilon_decay)
