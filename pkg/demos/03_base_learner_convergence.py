"""Policy-gradient base learner on a single stationary environment.

Runs episodic REINFORCE from a cold start and prints the learning curve,
then compares the learned policy against a brute-force grid search over
the two policy weights.
"""

import numpy as np

from uav_lifelong import CostParams, EnvironmentParams, EpisodeSimulator, LinearPolicy, base_learn

env = EnvironmentParams(lam=1.0, a_bar=4e6, sigma_sq=0.0, kappa=8e-21, eps_max=8e6)
cost_params = CostParams(beta=0.1, kappa=env.kappa)

sim = EpisodeSimulator(env, cost_params, horizon=40, rng=np.random.default_rng(1))
result = base_learn(sim, LinearPolicy(np.zeros(2), 1.5e6), budget_episodes=3000,
                    learn_rate=0.3, episodes_per_step=50, step_cap=2.0,
                    eval_episodes=200)

print("learning curve (batch mean reward):")
for i, r in enumerate(result.reward_curve):
    bar = "#" * max(0, int(40 + 8 * r))
    print(f"  step {i:3d}  {r:8.3f}  {bar}")
print(f"\nlearned alpha = {np.round(result.alpha, 3)}  "
      f"eval reward {result.mean_reward:.3f}")

oracle = EpisodeSimulator(env, cost_params, 40, np.random.default_rng(99))
best = (-np.inf, None)
for t0 in np.linspace(0, 4, 9):
    for t1 in np.linspace(0, 4, 9):
        hists = oracle.run(LinearPolicy(np.array([t0, t1]), 1.5e6), 40)
        reward = float(np.mean([h.mean_reward for h in hists]))
        if reward > best[0]:
            best = (reward, (t0, t1))
print(f"grid-search best  = {np.round(best[1], 2)}  reward {best[0]:.3f}")
print(f"cost ratio learner/grid = {(-result.mean_reward) / (-best[0]):.3f}")
