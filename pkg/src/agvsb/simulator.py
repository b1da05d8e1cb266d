"""Time-stepped multi-AGV simulation with full KPI accounting.

One tick is one second and one cell per move at 1 m/s, so path length in
cells equals travel seconds. Each tick: admit arrivals, resort the queue,
advance vehicles under the corridor reservation protocol, then dispatch
idle vehicles on fresh trips. Loading and unloading take zero ticks.

Reported KPI columns follow the sensitivity-table layout: TrT/WT/OpT are
per-order means (seconds), EmT/RT/SRT fleet totals, energy in Wh and costs
in dollars. The station acts as a multi-capacity depot; single-occupancy is
enforced on every other cell.
"""

from __future__ import annotations

import hashlib
import statistics
from dataclasses import dataclass, field

from . import costmodel
from .costmodel import CostParams, OrderServiceRecord, ProfileParams
from .layout import Cell, GridMap, WarehouseScale, generate_layout
from .orders import Dtw, Order, OrderStream, profiles_for, synthesize_stream
from .routing import NoPathError, ReservationTable, astar, order_stops
from .scheduler import DispatchQueue, Rule, next_batch, resort

AGV_CAPACITY = 4


class DeadlockError(RuntimeError):
    """No vehicle made progress for the configured number of ticks."""


@dataclass(frozen=True)
class SimConfig:
    scale: WarehouseScale = WarehouseScale.MEDIUM
    fleet_size: int = 3
    n_orders: int = 500
    owt: tuple[float, float] = (0.0, 5.0)
    dtw: Dtw = Dtw((1, 2, 4, 4))
    cost: CostParams = CostParams()
    profile_params: ProfileParams = ProfileParams()
    rule: Rule = Rule.FCFS
    seed: int = 0
    tick_seconds: float = 1.0
    resort_interval: float = 10.0
    ldc_trip_estimate_s: float = 60.0
    deadlock_wait_limit: int = 50
    stall_limit: int = 10_000

    def __post_init__(self):
        if self.fleet_size < 1 or self.n_orders < 1:
            raise ValueError("fleet_size and n_orders must be >= 1")


@dataclass
class Agv:
    """Vehicle state; mutated only by the owning simulation."""

    id: int
    position: Cell
    capacity: int = AGV_CAPACITY
    phase: str = "idleAtStation"            # idleAtStation | enRoute | returning
    manifest: list[Order] = field(default_factory=list)
    legs: list[list[Cell]] = field(default_factory=list)
    leg_idx: int = 0
    step_idx: int = 0
    stop_orders: dict[Cell, list[Order]] = field(default_factory=dict)
    consecutive_waits: int = 0
    cycle_running_s: float = 0.0            # battery cycle travel time
    cycle_index: int = 0
    moving_ticks: int = 0
    stationary_ticks: int = 0
    stationary_at_last_delivery: int = 0
    energy_wh: float = 0.0
    first_dispatch: int | None = None
    last_delivery: int | None = None
    recharges: int = 0

    def manifest_weight(self) -> float:
        return sum(o.weight for o in self.manifest)

    @property
    def active(self) -> bool:
        return self.phase != "idleAtStation"

    def next_cell(self) -> Cell:
        return self.legs[self.leg_idx][self.step_idx + 1]


@dataclass
class TripLog:
    """Actual executed loop, for constraint validation and replay."""

    agv_id: int
    order_ids: tuple[int, ...]
    weights: tuple[float, ...]
    walk: list[Cell]
    start_tick: int
    cycle_index: int
    end_tick: int | None = None

    @property
    def moving_steps(self) -> int:
        return len(self.walk) - 1


@dataclass(frozen=True)
class KpiReport:
    trt: float
    wt: float
    opt: float
    e1: float
    coi: float
    cod: float
    emt: float
    rt: float
    e2: float
    e: float
    coe: float
    cot: float
    srt: float
    cos: float
    service_level: float

    def identity_errors(self, rel_tol: float = 1e-6) -> list[str]:
        """Check the four accounting identities; empty list when they hold."""

        def off(lhs: float, rhs: float) -> bool:
            return abs(lhs - rhs) > rel_tol * max(1.0, abs(lhs), abs(rhs))

        errors = []
        if off(self.opt, self.trt + self.wt):
            errors.append(f"OpT {self.opt} != TrT + WT {self.trt + self.wt}")
        if off(self.e, self.e1 + self.e2):
            errors.append(f"E {self.e} != E1 + E2 {self.e1 + self.e2}")
        if off(self.cot, self.coi + self.cod):
            errors.append(f"CoT {self.cot} != CoI + CoD {self.coi + self.cod}")
        if off(self.cos, self.coe + self.cot):
            errors.append(f"CoS {self.cos} != CoE + CoT {self.coe + self.cot}")
        return errors


@dataclass
class SimResult:
    config: SimConfig
    grid: GridMap
    stream: OrderStream
    report: KpiReport
    records: list[OrderServiceRecord]
    trips: list[TripLog]
    events: list[tuple[int, int, str, int, int, int]]
    makespan: int

    def trace_lines(self):
        yield "tick,agv,event,orderId,x,y"
        for tick, agv, event, oid, x, y in self.events:
            yield f"{tick},{agv},{event},{oid},{x},{y}"


@dataclass(frozen=True)
class Violation:
    code: str       # EQ13..EQ22
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def child_seed(seed: int, label: str) -> int:
    """Stable sub-seed derivation, independent of PYTHONHASHSEED."""
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Simulation:
    """Single scenario run; owns all mutable state exclusively."""

    def __init__(self, config: SimConfig, grid: GridMap | None = None,
                 stream: OrderStream | None = None):
        self.config = config
        self.grid = grid or generate_layout(config.scale, child_seed(config.seed, "map"))
        self.stream = stream or synthesize_stream(
            config.n_orders, self.grid, config.owt, config.dtw,
            child_seed(config.seed, "stream"))
        self.profiles = profiles_for(config.dtw, config.profile_params)
        uihc = config.cost.uihc_per_min
        if uihc is None:
            uihc = costmodel.uihc_per_minute(
                config.cost.gamma,
                sum(o.price for o in self.stream.orders),
                len(self.stream.orders))
        self.uihc = uihc

        self.queue = DispatchQueue(rule=config.rule)
        self.agvs = [Agv(id=i + 1, position=self.grid.station)
                     for i in range(config.fleet_size)]
        self.table = ReservationTable(depot=self.grid.station)
        self.records: dict[int, OrderServiceRecord] = {}
        self.pickup_tick: dict[int, int] = {}
        self.order_energy: dict[int, float] = {o.id: 0.0 for o in self.stream.orders}
        self.empty_energy = 0.0
        self.trips: list[TripLog] = []
        self.open_trips: dict[int, TripLog] = {}
        self.events: list[tuple[int, int, str, int, int, int]] = []
        self.trip_durations: list[int] = []
        self.delivered = 0

    # -- event helpers ----------------------------------------------------

    def _emit(self, tick: int, agv: int, event: str, order_id: int, cell: Cell) -> None:
        self.events.append((tick, agv, event, order_id, cell[0], cell[1]))

    # -- main loop ---------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.config
        pending_arrivals = list(self.stream.orders)
        arrival_idx = 0
        total = len(pending_arrivals)
        tick = 0
        stalled = 0

        for agv in self.agvs:
            self._emit(0, agv.id, "init", -1, agv.position)

        while self.delivered < total:
            progress = False

            # 1) admit arrivals
            burst = False
            while arrival_idx < total and pending_arrivals[arrival_idx].arrival <= tick:
                order = pending_arrivals[arrival_idx]
                self.queue.add(order)
                self._emit(tick, -1, "arrive", order.id, order.pickup)
                arrival_idx += 1
                burst = True
                progress = True

            # 2) resort on arrivals and on the resort interval
            if self.queue.pending and (
                    burst or tick - self.queue.last_resort_tick >= cfg.resort_interval):
                resort(self.queue, tick, grid=self.grid, profiles=self.profiles,
                       trip_estimate_s=self._trip_estimate(),
                       resort_interval_s=cfg.resort_interval)

            # 3) move active vehicles under the reservation protocol
            moved = self._advance(tick)
            if moved:
                progress = True

            # 4) dispatch idle vehicles
            if self._dispatch(tick):
                progress = True

            # 5) time accounting over each vehicle's service span
            for agv in self.agvs:
                if agv.first_dispatch is None or agv.first_dispatch >= tick:
                    continue
                if agv.id in moved:
                    agv.moving_ticks += 1
                else:
                    agv.stationary_ticks += 1

            if progress:
                stalled = 0
            else:
                stalled += 1
                if stalled > cfg.stall_limit:
                    raise DeadlockError(
                        f"no progress for {stalled} ticks at tick {tick}; "
                        f"pending={len(self.queue)}, delivered={self.delivered}/{total}, "
                        f"positions={[(a.id, a.position) for a in self.agvs]}")
            tick += 1

        return self._finalize(tick - 1)

    def _trip_estimate(self) -> float:
        if not self.trip_durations:
            return self.config.ldc_trip_estimate_s
        recent = self.trip_durations[-20:]
        return statistics.fmean(recent)

    # -- movement ----------------------------------------------------------

    def _advance(self, tick: int) -> set[int]:
        movers = [a for a in self.agvs if a.active]
        if not movers:
            return set()
        self.table.begin_tick(tick, {a.id: a.position for a in self.agvs})
        for agv in movers:                      # ascending serial order
            proceed = self.table.reserve_step(agv.id, agv.next_cell(), tick)
            if not proceed:
                self._emit(tick, agv.id, "wait", -1, agv.position)

        moved: set[int] = set()
        for agv in movers:
            src, dst = self.table.moves[agv.id]
            if dst == src:
                agv.consecutive_waits += 1
                # stagger by serial so standoffs never replan symmetrically;
                # the lowest-priority (highest-serial) vehicle yields first
                threshold = (self.config.deadlock_wait_limit
                             + self.config.fleet_size - agv.id)
                if agv.consecutive_waits > threshold:
                    self._replan(tick, agv)
                continue
            agv.consecutive_waits = 0
            self._consume_energy(agv)
            agv.position = dst
            agv.step_idx += 1
            agv.cycle_running_s += self.config.tick_seconds
            self.open_trips[agv.id].walk.append(dst)
            self._emit(tick, agv.id, "move", -1, dst)
            moved.add(agv.id)
            if agv.step_idx == len(agv.legs[agv.leg_idx]) - 1:
                self._leg_end(tick, agv)
        return moved

    def _consume_energy(self, agv: Agv) -> None:
        weight = self.config.cost.self_weight + agv.manifest_weight()
        e = costmodel.leg_energy(weight, self.grid.cell_size, self.config.cost)
        agv.energy_wh += e
        if agv.manifest:
            share = e / len(agv.manifest)
            for order in agv.manifest:
                self.order_energy[order.id] += share
        else:
            self.empty_energy += e

    def _leg_end(self, tick: int, agv: Agv) -> None:
        if agv.leg_idx < len(agv.legs) - 1:
            self._pickup_here(tick, agv)
            agv.leg_idx += 1
            agv.step_idx = 0
            if agv.leg_idx == len(agv.legs) - 1:
                agv.phase = "returning"
        else:
            self._deliver(tick, agv)

    def _pickup_here(self, tick: int, agv: Agv) -> None:
        for order in agv.stop_orders.pop(agv.position, []):
            agv.manifest.append(order)
            self.pickup_tick[order.id] = tick
            self._emit(tick, agv.id, "pickup", order.id, agv.position)

    def _deliver(self, tick: int, agv: Agv) -> None:
        for order in agv.manifest:
            self._record_delivery(tick, agv, order)
        agv.manifest.clear()
        agv.phase = "idleAtStation"
        agv.legs = []
        agv.stop_orders = {}
        agv.stationary_at_last_delivery = agv.stationary_ticks
        agv.last_delivery = tick
        log = self.open_trips.pop(agv.id)
        log.end_tick = tick
        self.trip_durations.append(tick - log.start_tick)

    def _record_delivery(self, tick: int, agv: Agv, order: Order) -> None:
        s_i = self.pickup_tick[order.id]
        waiting = costmodel.waiting_time(s_i, order.arrival)
        travel = tick - s_i
        offset = order.deadline_offset
        delay = max(0.0, waiting - offset)
        booked = (costmodel.delay_cost(self.profiles[order.cls], waiting)
                  if waiting > offset else 0.0)
        self.records[order.id] = OrderServiceRecord(
            order_id=order.id, waiting_time=waiting, travel_time=travel,
            delay_time=delay, order_energy=self.order_energy[order.id],
            inventory_cost=costmodel.inventory_cost(waiting, self.uihc),
            delay_cost=booked)
        self.delivered += 1
        self._emit(tick, agv.id, "deliver", order.id, agv.position)

    def _replan(self, tick: int, agv: Agv) -> None:
        """After a long blockage, route the current leg around other AGVs."""
        goal = agv.legs[agv.leg_idx][-1]
        others = frozenset(a.position for a in self.agvs
                           if a.id != agv.id) - {self.grid.station, goal}
        try:
            path = astar(self.grid, agv.position, goal, extra_obstacles=others)
        except NoPathError:
            agv.consecutive_waits = 0
            return
        agv.legs[agv.leg_idx] = list(path.cells)
        agv.step_idx = 0
        agv.consecutive_waits = 0
        self._emit(tick, agv.id, "replan", -1, agv.position)

    # -- dispatch ----------------------------------------------------------

    def _dispatch(self, tick: int) -> bool:
        dispatched = False
        for agv in self.agvs:
            if agv.active or not self.queue.pending:
                continue
            batch = next_batch(self.queue, agv.capacity,
                               self.config.cost.payload_limit)
            if not batch:
                continue
            self._start_trip(tick, agv, batch)
            dispatched = True
        return dispatched

    def _start_trip(self, tick: int, agv: Agv, batch: list[Order]) -> None:
        station = self.grid.station
        if agv.first_dispatch is None:
            agv.first_dispatch = tick

        at_station = [o for o in batch if o.pickup == station]
        remote = [o for o in batch if o.pickup != station]
        planned_steps = 0
        trip = None
        if remote:
            trip = order_stops(self.grid, [o.pickup for o in remote], station)
            trip.agv_id = agv.id
            planned_steps = trip.total_steps

        # battery: recharge instantly at the depot if the loop would not fit
        if (agv.cycle_running_s + planned_steps * self.config.tick_seconds
                > self.config.cost.battery_budget):
            agv.cycle_running_s = 0.0
            agv.cycle_index += 1
            agv.recharges += 1
            self._emit(tick, agv.id, "recharge", -1, station)

        log = TripLog(agv_id=agv.id,
                      order_ids=tuple(o.id for o in batch),
                      weights=tuple(o.weight for o in batch),
                      walk=[station], start_tick=tick,
                      cycle_index=agv.cycle_index)
        self.open_trips[agv.id] = log
        self.trips.append(log)

        for order in batch:
            self._emit(tick, agv.id, "dispatch", order.id, order.pickup)
        agv.manifest = list(at_station)
        for order in at_station:
            self.pickup_tick[order.id] = tick
            self._emit(tick, agv.id, "pickup", order.id, station)

        if not remote:
            self._deliver(tick, agv)
            return

        agv.stop_orders = {}
        for order in remote:
            agv.stop_orders.setdefault(order.pickup, []).append(order)
        agv.legs = [list(leg.cells) for leg in trip.legs]
        agv.leg_idx = 0
        agv.step_idx = 0
        agv.phase = "enRoute" if len(agv.legs) > 1 else "returning"

    # -- reporting ---------------------------------------------------------

    def _finalize(self, makespan: int) -> SimResult:
        cfg = self.config
        records = [self.records[o.id] for o in self.stream.orders]
        trt = statistics.fmean(r.travel_time for r in records)
        wt = statistics.fmean(r.waiting_time for r in records)
        e1 = sum(r.order_energy for r in records)
        e2 = self.empty_energy
        coi = sum(r.inventory_cost for r in records)
        cod = sum(r.delay_cost for r in records)
        cot = coi + cfg.cost.beta * cod
        e = e1 + e2
        coe = costmodel.energy_cost(e, cfg.cost)
        rt = float(sum(a.moving_ticks for a in self.agvs)) * cfg.tick_seconds
        emt = float(sum(a.stationary_at_last_delivery for a in self.agvs)) * cfg.tick_seconds
        srt = rt + emt
        on_time = sum(1 for r in records if r.delay_time == 0)
        report = KpiReport(
            trt=trt, wt=wt, opt=trt + wt, e1=e1, coi=coi, cod=cod,
            emt=emt, rt=rt, e2=e2, e=e, coe=coe, cot=cot, srt=srt,
            cos=coe + cot, service_level=on_time / len(records))
        return SimResult(config=cfg, grid=self.grid, stream=self.stream,
                         report=report, records=records, trips=self.trips,
                         events=self.events, makespan=makespan)


def run(config: SimConfig, grid: GridMap | None = None,
        stream: OrderStream | None = None) -> SimResult:
    """Simulate one scenario to completion; deterministic for a fixed seed."""
    return Simulation(config, grid=grid, stream=stream).run()


def service_level(records) -> float:
    """Fraction of orders delivered within their deadline."""
    records = list(records)
    if not records:
        return 1.0
    return sum(1 for r in records if r.delay_time == 0) / len(records)


def validate_constraints(result: SimResult, *, cost: CostParams | None = None,
                         dtw: Dtw | None = None,
                         profile_params: ProfileParams | None = None) -> list[Violation]:
    """Check the assignment, routing, capacity, and parameter constraints.

    Keyword overrides let fault-injection tests re-validate a trace against
    tightened parameters (e.g. a smaller battery budget).
    """
    cfg = result.config
    cost = cost or cfg.cost
    dtw = dtw or cfg.dtw
    profile_params = profile_params or cfg.profile_params
    station = result.grid.station
    violations: list[Violation] = []

    assigned: dict[int, int] = {}
    for trip in result.trips:
        walk = trip.walk
        if walk[0] != station or walk[-1] != station:
            violations.append(Violation(
                "EQ15", f"AGV {trip.agv_id} trip at tick {trip.start_tick} "
                        f"is not a closed loop through the station"))
        for a, b in zip(walk, walk[1:]):
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                violations.append(Violation(
                    "EQ13", f"AGV {trip.agv_id} walk jumps from {a} to {b}"))
                break
        if len(trip.order_ids) > AGV_CAPACITY:
            violations.append(Violation(
                "EQ16", f"AGV {trip.agv_id} carries {len(trip.order_ids)} orders "
                        f"(capacity {AGV_CAPACITY})"))
        if sum(trip.weights) > cost.payload_limit + 1e-9:
            violations.append(Violation(
                "EQ17", f"AGV {trip.agv_id} load {sum(trip.weights):.3f} kg exceeds "
                        f"{cost.payload_limit} kg"))
        for oid in trip.order_ids:
            assigned[oid] = assigned.get(oid, 0) + 1

    for order in result.stream.orders:
        count = assigned.get(order.id, 0)
        if count != 1:
            violations.append(Violation(
                "EQ14", f"order {order.id} assigned {count} times"))
        if order.deadline <= order.arrival:
            violations.append(Violation(
                "EQ19", f"order {order.id} deadline {order.deadline} not after "
                        f"arrival {order.arrival}"))

    cycles: dict[tuple[int, int], float] = {}
    for trip in result.trips:
        key = (trip.agv_id, trip.cycle_index)
        cycles[key] = cycles.get(key, 0.0) + trip.moving_steps * cfg.tick_seconds
    for (agv_id, cycle), seconds in sorted(cycles.items()):
        if seconds > cost.battery_budget + 1e-9:
            violations.append(Violation(
                "EQ18", f"AGV {agv_id} cycle {cycle} ran {seconds:.0f} s "
                        f"(budget {cost.battery_budget:.0f} s)"))

    offsets = [dtw.offset_s(c) for c in "ABCD"]
    if not all(offsets[0] <= off for off in offsets[1:]):
        violations.append(Violation("EQ20", f"class-A window not tightest: {offsets}"))
    if not 0.0 <= cost.w_t <= 1.0:
        violations.append(Violation("EQ21", f"w_t {cost.w_t} outside [0, 1]"))
    caps = [profile_params.caps[c] for c in "ABCD"]
    if not all(a >= b for a, b in zip(caps, caps[1:])):
        violations.append(Violation("EQ22", f"caps not ordered A>=B>=C>=D: {caps}"))

    return violations
