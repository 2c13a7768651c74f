"""One device, one environment: the age-of-information sawtooth.

Steps a single device for a few hundred slots under a fixed linear policy
and prints a window of the trace. The age climbs one slot at a time while
work is queued and snaps down whenever the freshest packet completes.
"""

import numpy as np

from uav_lifelong import (CostParams, DeviceState, EnvironmentParams,
                          LinearPolicy, act, cost, sample_packet, step_aoi,
                          step_queue)

env = EnvironmentParams(lam=0.12, a_bar=2.5e7, sigma_sq=(5e6) ** 2,
                        kappa=1e-21, eps_max=6e6)
cost_params = CostParams(beta=0.1, kappa=env.kappa)
policy = LinearPolicy(np.array([0.6, 1.8]), sigma_z=1.2e6)

rng = np.random.default_rng(4)
state = DeviceState()
trace = []
for slot in range(400):
    packet = sample_packet(env, slot, rng)
    cpu = act(policy, state, env.eps_max, rng)
    c = cost(state, cpu, cost_params)
    trace.append((slot, state.aoi, state.backlog, cpu, c, packet.arrived))
    state = step_queue(state, packet, cpu, env.eps_max)
    state = step_aoi(state, slot)

aoi = np.array([t[1] for t in trace], dtype=float)
print(f"mean AoI {aoi.mean():.1f}, max AoI {aoi.max():.0f}, "
      f"mean cost {np.mean([t[4] for t in trace]):.3f}")
print("\nslot  aoi  backlog(cycles)  cpu(cycles)  cost   arrival")
for slot, age, backlog, cpu, c, arrived in trace[60:100]:
    marker = "<-- packet" if arrived else ""
    print(f"{slot:4d} {age:4.0f} {backlog:14.3e} {cpu:12.3e} {c:6.2f}  {marker}")
