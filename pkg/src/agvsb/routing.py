"""Inner-level routing: A* shortest paths, multi-stop trips, and the
per-tick corridor reservation protocol.

The grid is 4-connected with unit cells, so the Manhattan heuristic is
admissible and path length in cells equals travel seconds at 1 m/s. Trips
visit up to four pickups and return to the station; the stop order is the
exact optimum over all permutations. Conflicts resolve by AGV serial number:
the lower serial proceeds, everyone else stops and waits.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

from .layout import Cell, GridMap

MAX_STOPS = 4


class NoPathError(ValueError):
    """Goal not reachable from start on this map."""


class BatchSizeError(ValueError):
    """Trip batches must contain 1..MAX_STOPS pickups."""


@dataclass(frozen=True)
class Path:
    cells: tuple[Cell, ...]

    def length(self, cell_size: float = 1.0) -> float:
        return (len(self.cells) - 1) * cell_size

    @property
    def steps(self) -> int:
        return len(self.cells) - 1


@dataclass
class Trip:
    """One closed loop: station -> stops -> station."""

    stops: tuple[Cell, ...]
    legs: tuple[Path, ...]
    terminal: Cell
    agv_id: int | None = None

    @property
    def total_steps(self) -> int:
        return sum(leg.steps for leg in self.legs)

    def length(self, cell_size: float = 1.0) -> float:
        return self.total_steps * cell_size


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def astar(grid: GridMap, start: Cell, goal: Cell,
          extra_obstacles: frozenset[Cell] | None = None) -> Path:
    """Shortest 4-connected path; deterministic tie-break on (f, h, cell).

    `extra_obstacles` lets the deadlock fallback treat other vehicles'
    current cells as temporarily blocked.
    """
    if not grid.passable(start) or not grid.passable(goal):
        raise NoPathError(f"start {start} or goal {goal} blocked")
    blocked = extra_obstacles or frozenset()
    if start == goal:
        return Path(cells=(start,))
    open_heap = [(manhattan(start, goal), manhattan(start, goal), start)]
    g_score = {start: 0}
    came_from: dict[Cell, Cell] = {}
    closed: set[Cell] = set()
    while open_heap:
        f, h, current = heapq.heappop(open_heap)
        if current == goal:
            cells = [current]
            while current in came_from:
                current = came_from[current]
                cells.append(current)
            cells.reverse()
            return Path(cells=tuple(cells))
        if current in closed:
            continue
        closed.add(current)
        g = g_score[current]
        for nxt in grid.neighbors(current):
            if nxt in closed or nxt in blocked:
                continue
            tentative = g + 1
            if tentative < g_score.get(nxt, 1 << 30):
                g_score[nxt] = tentative
                came_from[nxt] = current
                hn = manhattan(nxt, goal)
                heapq.heappush(open_heap, (tentative + hn, hn, nxt))
    raise NoPathError(f"no path from {start} to {goal}")


def order_stops(grid: GridMap, batch: list[Cell], start: Cell) -> Trip:
    """Build the optimal closed tour over a batch of pickup cells.

    Exact over all permutations (batch size is at most 4). Duplicate cells
    in the batch collapse to one stop. Ties between equal-length tours break
    on the lexicographically smallest stop sequence.
    """
    if not 1 <= len(batch) <= MAX_STOPS:
        raise BatchSizeError(f"batch size {len(batch)} outside 1..{MAX_STOPS}")
    stops = sorted(set(batch) - {start})
    if not stops:
        return Trip(stops=(), legs=(), terminal=start)
    nodes = [start] + stops
    dist: dict[tuple[Cell, Cell], int] = {}
    paths: dict[tuple[Cell, Cell], Path] = {}
    for a, b in itertools.combinations(nodes, 2):
        p = astar(grid, a, b)
        dist[(a, b)] = dist[(b, a)] = p.steps
        paths[(a, b)] = p
        paths[(b, a)] = Path(cells=tuple(reversed(p.cells)))
    best_perm = None
    best_len = None
    for perm in itertools.permutations(stops):
        tour = [start, *perm, start]
        total = sum(dist[(a, b)] for a, b in zip(tour, tour[1:]))
        if best_len is None or total < best_len or (total == best_len and perm < best_perm):
            best_len = total
            best_perm = perm
    tour = [start, *best_perm, start]
    legs = tuple(paths[(a, b)] for a, b in zip(tour, tour[1:]))
    return Trip(stops=tuple(best_perm), legs=legs, terminal=start)


@dataclass
class ReservationTable:
    """Per-tick occupancy intents, owned by the simulation engine.

    Rebuilt every tick from current AGV positions: a vehicle proceeds into a
    cell only if nobody claimed it, nobody claimed the opposing edge, and
    its current occupant (if any) has already committed to leave this tick.
    Lower serial numbers outrank higher ones and displace existing claims by
    higher serials, forcing those vehicles back into a wait. The `depot`
    cell (the station) is exempt from single-occupancy so returning vehicles
    can always park.
    """

    depot: Cell | None = None
    tick: int = -1
    positions: dict[int, Cell] = field(default_factory=dict)
    occupants: dict[Cell, int] = field(default_factory=dict)
    claims: dict[Cell, int] = field(default_factory=dict)          # cell -> agv
    edge_claims: dict[tuple[Cell, Cell], int] = field(default_factory=dict)
    moves: dict[int, tuple[Cell, Cell]] = field(default_factory=dict)
    forced_waits: set[int] = field(default_factory=set)

    def begin_tick(self, tick: int, positions: dict[int, Cell]) -> None:
        self.tick = tick
        self.positions = dict(positions)
        self.occupants = {cell: agv for agv, cell in positions.items()
                          if cell != self.depot}
        self.claims = {}
        self.edge_claims = {}
        self.moves = {}
        self.forced_waits = set()

    def reserve_step(self, agv_id: int, next_cell: Cell, tick: int | None = None) -> bool:
        """Claim `next_cell` for this tick; True means proceed, False wait.

        A waiting vehicle holds (claims) its current cell so nobody paths
        into it.
        """
        if tick is not None and tick != self.tick:
            raise ValueError(f"reservation table is at tick {self.tick}, not {tick}")
        current = self.positions[agv_id]
        if next_cell == current:
            self._hold(agv_id, current)
            return True

        reverse = self.edge_claims.get((next_cell, current))
        if reverse is not None and reverse < agv_id:
            self._hold(agv_id, current)  # head-on swap forbidden
            return False

        at_depot = next_cell == self.depot
        claimer = self.claims.get(next_cell)
        if not at_depot:
            if claimer is not None and claimer < agv_id:
                self._hold(agv_id, current)
                return False
            occupant = self.occupants.get(next_cell)
            if occupant is not None and occupant != agv_id:
                move = self.moves.get(occupant)
                vacating = move is not None and move[1] != next_cell
                if not vacating:
                    self._hold(agv_id, current)
                    return False
            if claimer is not None and claimer > agv_id:
                self._revoke(claimer)
        if reverse is not None and reverse > agv_id:
            self._revoke(reverse)

        if not at_depot:
            self.claims[next_cell] = agv_id
        self.edge_claims[(current, next_cell)] = agv_id
        self.moves[agv_id] = (current, next_cell)
        return True

    def _hold(self, agv_id: int, cell: Cell) -> None:
        if cell != self.depot:
            claimer = self.claims.get(cell)
            if claimer is not None and claimer != agv_id:
                self._revoke(claimer)  # the holder physically occupies the cell
            self.claims[cell] = agv_id
        self.moves[agv_id] = (cell, cell)

    def _revoke(self, loser: int) -> None:
        """Withdraw a committed move; the loser is forced to wait in place."""
        move = self.moves.pop(loser, None)
        if move is None:
            return
        src, dst = move
        if self.claims.get(dst) == loser:
            del self.claims[dst]
        self.edge_claims.pop((src, dst), None)
        self.forced_waits.add(loser)
        self._hold(loser, src)
