"""Rotary-wing propulsion power across forward velocity.

Reproduces the characteristic U-shape: the induced term dominates at low
speed, the parasite term at high speed, so total power dips to an interior
minimum. Also shows that energy-per-meter (what a flight actually pays per
unit distance) has its own, different optimum.
"""

import numpy as np

from uav_lifelong import PropulsionParams, energy_per_meter, power

params = PropulsionParams()

print(f"hover power p(0) = {power(params, 0.0):.3f} W "
      f"(= blade profile {params.p0} + induced {params.pi})")

velocities = np.arange(1.0, 40.1, 0.5)
powers = np.array([power(params, v) for v in velocities])
per_meter = np.array([energy_per_meter(params, v) for v in velocities])

v_power = velocities[np.argmin(powers)]
v_range = velocities[np.argmin(per_meter)]
print(f"min power          : {powers.min():8.2f} W   at {v_power:.1f} m/s")
print(f"min energy per meter: {per_meter.min():8.2f} J/m at {v_range:.1f} m/s")
print()
print(" v [m/s]   power [W]   J/m")
for v in (10, 15, 20, 25, 30, 35, 40):
    print(f"{v:7.0f} {power(params, v):11.2f} {energy_per_meter(params, v):7.2f}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(velocities, powers)
    ax1.set_xlabel("velocity (m/s)")
    ax1.set_ylabel("propulsion power (W)")
    ax1.grid(alpha=0.4)
    ax2.plot(velocities, per_meter, color="tab:orange")
    ax2.set_xlabel("velocity (m/s)")
    ax2.set_ylabel("energy per meter (J/m)")
    ax2.grid(alpha=0.4)
    fig.tight_layout()
    fig.savefig("power_curve.svg", format="svg", metadata={"Date": None})
    print("\nwrote power_curve.svg")
except ImportError:
    pass
