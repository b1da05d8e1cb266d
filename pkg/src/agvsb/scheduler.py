"""Outer-level scheduling: the six queue-sorting rules and trip batching.

Every rule maps the pending (arrived, unassigned) orders to a dispatch
sequence; batching then takes the first orders that fit vehicle capacity and
payload. FCFS/SPT/EDT/LDC are the classical baselines; PDSP sorts by
customer class then tolerance window, DCSP purely by projected delay cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .costmodel import DelayCostProfile, delay_cost
from .layout import GridMap
from .orders import Order


class Rule(Enum):
    FCFS = "fcfs"
    SPT = "spt"
    EDT = "edt"
    LDC = "ldc"
    PDSP = "pdsp"
    DCSP = "dcsp"


CLASS_RANK = {"A": 0, "B": 1, "C": 2, "D": 3}


def sort_fcfs(pending: list[Order], now: float) -> list[int]:
    """Strict arrival order; stable, so equal arrivals keep insertion order."""
    return [o.id for o in sorted(pending, key=lambda o: o.arrival)]


def sort_spt(pending: list[Order], now: float, grid: GridMap) -> list[int]:
    """Shortest station-to-pickup distance first, ties by arrival."""
    dist = grid.station_distances
    return [o.id for o in sorted(pending, key=lambda o: (dist[o.pickup], o.arrival, o.id))]


def sort_edt(pending: list[Order], now: float) -> list[int]:
    """Earliest absolute deadline first, ties by arrival."""
    return [o.id for o in sorted(pending, key=lambda o: (o.deadline, o.arrival, o.id))]


def sort_ldc(pending: list[Order], now: float, profiles: dict[str, DelayCostProfile],
             trip_estimate_s: float = 60.0) -> list[int]:
    """Largest projected delay penalty first, ties by deadline.

    The projection evaluates each order's class curve at the time it would
    plausibly be served: `now` plus its queue position times the recent mean
    trip duration.
    """
    scored = []
    for pos, o in enumerate(pending):
        projected_wait = (now + (pos + 1) * trip_estimate_s) - o.arrival
        cost = delay_cost(profiles[o.cls], projected_wait)
        scored.append((-cost, o.deadline, o.id))
    scored.sort()
    return [oid for _, _, oid in scored]


def sort_pdsp(pending: list[Order], now: float) -> list[int]:
    """Class A..D first, then tightest tolerance window, then arrival."""
    return [o.id for o in sorted(
        pending,
        key=lambda o: (CLASS_RANK[o.cls], o.deadline - o.arrival, o.arrival, o.id))]


def sort_dcsp(pending: list[Order], now: float, profiles: dict[str, DelayCostProfile],
              resort_interval_s: float = 10.0) -> list[int]:
    """Highest accrued-plus-imminent delay cost first, class-blind.

    Score is the cost already accrued at `now` plus the marginal cost the
    order would pick up by the next resort; ties break by deadline.
    """
    scored = []
    for o in pending:
        wait = now - o.arrival
        accrued = delay_cost(profiles[o.cls], wait)
        marginal = delay_cost(profiles[o.cls], wait + resort_interval_s) - accrued
        scored.append((-(accrued + marginal), o.deadline, o.id))
    scored.sort()
    return [oid for _, _, oid in scored]


@dataclass
class DispatchQueue:
    """Arrived-but-unassigned orders, kept in rule order."""

    rule: Rule
    pending: list[Order] = field(default_factory=list)
    last_resort_tick: float = 0.0

    def add(self, order: Order) -> None:
        self.pending.append(order)

    def __len__(self) -> int:
        return len(self.pending)


def resort(queue: DispatchQueue, now: float, *, grid: GridMap | None = None,
           profiles: dict[str, DelayCostProfile] | None = None,
           trip_estimate_s: float = 60.0,
           resort_interval_s: float = 10.0) -> DispatchQueue:
    """Re-apply the queue's rule comparator over the still-pending orders."""
    rule = queue.rule
    pending = queue.pending
    if rule is Rule.FCFS:
        order_ids = sort_fcfs(pending, now)
    elif rule is Rule.SPT:
        order_ids = sort_spt(pending, now, grid)
    elif rule is Rule.EDT:
        order_ids = sort_edt(pending, now)
    elif rule is Rule.LDC:
        order_ids = sort_ldc(pending, now, profiles, trip_estimate_s)
    elif rule is Rule.PDSP:
        order_ids = sort_pdsp(pending, now)
    elif rule is Rule.DCSP:
        order_ids = sort_dcsp(pending, now, profiles, resort_interval_s)
    else:  # pragma: no cover
        raise ValueError(f"unknown rule {rule}")
    by_id = {o.id: o for o in pending}
    queue.pending = [by_id[i] for i in order_ids]
    queue.last_resort_tick = now
    return queue


def next_batch(queue: DispatchQueue, capacity: int, weight_limit: float) -> list[Order]:
    """Pop up to `capacity` orders whose cumulative weight fits the payload.

    Orders that would individually breach the remaining payload are skipped
    but stay pending in place, preserving their rank.
    """
    taken: list[Order] = []
    remaining: list[Order] = []
    weight = 0.0
    for order in queue.pending:
        if len(taken) < capacity and weight + order.weight <= weight_limit:
            taken.append(order)
            weight += order.weight
        else:
            remaining.append(order)
    queue.pending = remaining
    return taken
