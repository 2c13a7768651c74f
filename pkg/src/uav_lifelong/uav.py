"""Rotary-wing UAV propulsion power and flight kinematics.

Propulsion power is the sum of a blade-profile term (grows with v^2), an
induced term (decays with v), and a parasite term (grows with v^3), which
gives the characteristic U-shaped power curve with an interior minimum.
Flight energy is travel time times level-flight power; hovering energy is
treated as a constant overhead and excluded from the accounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PropulsionParams:
    """Rotary-wing propulsion constants (defaults: Mica2-scenario UAV).

    p0/pi are the blade-profile and induced powers in hover (watts),
    v_tip the rotor tip speed, v0 the mean rotor-induced hover velocity,
    d0 the fuselage drag ratio, s_rotor the rotor solidity, rho the air
    density and area the rotor disc area.

    ``legacy_induced_term`` switches the induced term to a variant with
    v0^2 instead of v0^4 inside the inner radical, kept only for
    comparison; the default is the standard rotary-wing form.
    """

    p0: float = 23.661
    pi: float = 88.627
    v_tip: float = 120.0
    v0: float = 4.03
    d0: float = 0.6
    s_rotor: float = 0.05
    rho: float = 1.225
    area: float = 0.503
    legacy_induced_term: bool = False

    def __post_init__(self):
        for name in ("p0", "pi", "v_tip", "v0", "d0", "s_rotor", "rho", "area"):
            if getattr(self, name) <= 0:
                raise ValueError(f"propulsion parameter {name} must be positive")


def power(params: PropulsionParams, velocity: float) -> float:
    """Level-flight propulsion power in watts at a given forward velocity.

    At v=0 this reduces to p0 + pi (the parasite term vanishes and the
    induced radical collapses to 1).
    """
    if velocity < 0:
        raise ValueError("velocity must be nonnegative")
    v2 = velocity * velocity
    v4 = v2 * v2
    blade = params.p0 * (1.0 + 3.0 * v2 / (params.v_tip**2))
    v0_sq = params.v0**2
    inner_div = 4.0 * (v0_sq if params.legacy_induced_term else v0_sq**2)
    induced = params.pi * math.sqrt(
        math.sqrt(1.0 + v4 / inner_div) - v2 / (2.0 * v0_sq)
    )
    parasite = 0.5 * params.d0 * params.rho * params.s_rotor * params.area * v2 * velocity
    return blade + induced + parasite


@dataclass(frozen=True)
class FlightDecision:
    """One point-to-point flight: destination, speed and its energy bill.

    ``travel_slots`` is the flight time rounded up to whole slots so the
    device clock stays integral; ``energy`` uses the exact (un-rounded)
    travel time.
    """

    destination: int
    velocity: float
    origin: tuple[float, float]
    dest_coords: tuple[float, float]
    distance: float
    energy: float
    travel_slots: int


def flight(
    params: PropulsionParams,
    origin: tuple[float, float],
    dest_coords: tuple[float, float],
    destination: int,
    velocity: float,
    slot_seconds: float = 1.0,
    v_min: float = 10.0,
    v_max: float = 40.0,
) -> FlightDecision:
    """Plan a straight-line flight and account its propulsion energy.

    Energy is (distance / velocity) * power(velocity); a zero-distance
    flight costs nothing and takes zero slots.
    """
    if not v_min <= velocity <= v_max:
        raise ValueError(f"velocity {velocity} outside [{v_min}, {v_max}]")
    dist = math.hypot(dest_coords[0] - origin[0], dest_coords[1] - origin[1])
    if dist == 0.0:
        return FlightDecision(destination, velocity, tuple(origin), tuple(dest_coords), 0.0, 0.0, 0)
    seconds = dist / velocity
    return FlightDecision(
        destination=destination,
        velocity=velocity,
        origin=tuple(origin),
        dest_coords=tuple(dest_coords),
        distance=dist,
        energy=seconds * power(params, velocity),
        travel_slots=math.ceil(seconds / slot_seconds),
    )


def energy_per_meter(params: PropulsionParams, velocity: float) -> float:
    """Propulsion energy per meter travelled; minimizing it over velocity
    is independent of distance."""
    return power(params, velocity) / velocity
