"""Per-slot IoT device dynamics: FCFS work queue, age of information, cost.

A device holds a FIFO of partially processed packets. Each slot it receives
at most one packet, spends a chosen number of CPU cycles draining the queue
head-first, and then updates its age of information: +1 when nothing
finished, otherwise the age snaps down to the freshness of the newest
packet completed this slot.

The per-slot cost blends data staleness with cubic CPU energy:
``beta * aoi + (1 - beta) * kappa * cpu**3``; the RL reward is its negation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .envsim import PacketEvent

_REL_TOL = 1e-6


@dataclass
class DeviceState:
    """Queue-and-age state at the start of a slot.

    ``pending`` is FIFO-ordered (remaining_cycles, generation_slot);
    ``backlog`` mirrors the sum of remaining cycles. ``completed_gen_slots``
    holds the generation slots of packets that finished during the most
    recent queue step and is consumed by the age update.
    """

    aoi: int = 1
    backlog: float = 0.0
    pending: list[list] = field(default_factory=list)
    completed_gen_slots: tuple[int, ...] = ()

    def copy(self) -> "DeviceState":
        return DeviceState(
            aoi=self.aoi,
            backlog=self.backlog,
            pending=[list(p) for p in self.pending],
            completed_gen_slots=self.completed_gen_slots,
        )

    def check(self) -> None:
        total = sum(rem for rem, _ in self.pending)
        scale = max(abs(total), abs(self.backlog), 1.0)
        if abs(total - self.backlog) > _REL_TOL * scale:
            raise AssertionError(f"backlog {self.backlog} != pending sum {total}")
        if self.aoi < 0:
            raise AssertionError("aoi must be nonnegative")


@dataclass(frozen=True)
class CostParams:
    beta: float = 0.1      # 1 = pure AoI, 0 = pure CPU energy
    kappa: float = 1e-21   # J/cycles^3

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")


def drain_fifo(pending: list[list], cpu: float) -> list[int]:
    """Consume up to ``cpu`` cycles from the FIFO head, in place.

    Returns the generation slots of fully processed packets, in completion
    (= generation) order. The head packet may be left partially consumed.
    """
    budget = cpu
    completed = []
    while budget > 0.0 and pending:
        head = pending[0]
        if head[0] <= budget:
            budget -= head[0]
            completed.append(head[1])
            pending.pop(0)
        else:
            head[0] -= budget
            budget = 0.0
    return completed


def step_queue(state: DeviceState, packet: PacketEvent, cpu: float,
               eps_max: float) -> DeviceState:
    """Apply one slot of arrivals and FCFS processing.

    The caller must already have clamped ``cpu`` into [0, eps_max]; cycles
    may partially consume the head packet. Completed packets are recorded
    with their generation slots for the age update.
    """
    if cpu < 0 or cpu > eps_max:
        raise ValueError(f"cpu {cpu} outside [0, {eps_max}]")
    new = state.copy()
    if packet.arrived:
        new.pending.append([packet.size, packet.generation_slot])
    completed = drain_fifo(new.pending, cpu)
    # equivalent to max(backlog + q*a - cpu, 0) but free of float drift
    new.backlog = sum(rem for rem, _ in new.pending)
    new.completed_gen_slots = tuple(completed)
    return new


def step_aoi(state: DeviceState, slot: int) -> DeviceState:
    """Advance the age of information after the slot's processing.

    If nothing completed this slot the age grows by one; otherwise the new
    age is (slot + 1) minus the generation slot of the newest packet
    completed (the freshest data now fully processed).
    """
    new = state.copy()
    if state.completed_gen_slots:
        new.aoi = (slot + 1) - max(state.completed_gen_slots)
    else:
        new.aoi = state.aoi + 1
    new.completed_gen_slots = ()
    return new


def cost(state: DeviceState, cpu: float, params: CostParams) -> float:
    """Balanced staleness/energy cost for acting with ``cpu`` cycles in the
    current state. The RL reward is ``-cost``."""
    return params.beta * state.aoi + (1.0 - params.beta) * params.kappa * cpu**3
