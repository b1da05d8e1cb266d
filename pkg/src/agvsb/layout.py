"""Grid warehouse layouts: zoned storage, obstacles, and the picking station.

Maps are rectangular grids with single-width corridors every second row and
column; the cells in between are storage locations labelled with zones A-F
(or structural obstacles). Zone F is the high-demand zone and always sits
closest to the station, which is the single drop-off node on the bottom edge
where AGVs deliver to the conveyor.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

Cell = tuple[int, int]

ZONES = ("A", "B", "C", "D", "E", "F")

# fraction of the storage lattice reserved for structural obstacles (pillars)
OBSTACLE_FRACTION = 0.08


class WarehouseScale(Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"

    @property
    def grid_dims(self) -> tuple[int, int]:
        return _SCALE_DIMS[self]


_SCALE_DIMS = {
    WarehouseScale.SMALL: (15, 15),
    WarehouseScale.MEDIUM: (25, 25),
    WarehouseScale.LARGE: (40, 40),
}


class UnknownZoneError(KeyError):
    """Raised when a zone label is not present on the map."""


@dataclass(frozen=True)
class GridMap:
    """Immutable warehouse grid.

    Coordinates are (x, y) with y=0 the bottom edge; cell_size is meters per
    cell. `zone_of` maps storage cells to their zone label; corridor cells
    carry no zone. The station is the conveyor drop-off node.
    """

    width: int
    height: int
    station: Cell
    obstacles: frozenset[Cell]
    zone_of: dict[Cell, str]
    cell_size: float = 1.0
    _zone_cells: dict[str, list[Cell]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        by_zone: dict[str, list[Cell]] = {}
        for cell, z in self.zone_of.items():
            by_zone.setdefault(z, []).append(cell)
        for cells in by_zone.values():
            cells.sort()
        object.__setattr__(self, "_zone_cells", by_zone)

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def passable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.obstacles

    def neighbors(self, cell: Cell) -> list[Cell]:
        x, y = cell
        out = []
        for nx, ny in ((x, y + 1), (x, y - 1), (x - 1, y), (x + 1, y)):
            if self.passable((nx, ny)):
                out.append((nx, ny))
        return out

    def zones(self) -> list[str]:
        return sorted(self._zone_cells)

    def zone_cells(self, zone: str) -> list[Cell]:
        try:
            return self._zone_cells[zone]
        except KeyError:
            raise UnknownZoneError(f"zone {zone!r} not present on this map") from None

    @cached_property
    def station_distances(self) -> dict[Cell, int]:
        """BFS distance (in cells) from the station to every passable cell."""
        dist = {self.station: 0}
        frontier = deque([self.station])
        while frontier:
            cur = frontier.popleft()
            for nxt in self.neighbors(cur):
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    frontier.append(nxt)
        return dist

    def render(self) -> str:
        """Plain-text dump: '#' obstacle, '.' corridor, 'S' station, zone letter."""
        rows = []
        for y in range(self.height - 1, -1, -1):
            row = []
            for x in range(self.width):
                cell = (x, y)
                if cell == self.station:
                    row.append("S")
                elif cell in self.obstacles:
                    row.append("#")
                else:
                    row.append(self.zone_of.get(cell, "."))
            rows.append("".join(row))
        return "\n".join(rows)


def generate_layout(scale: WarehouseScale, seed: int) -> GridMap:
    """Generate a zoned warehouse map; pure function of (scale, seed).

    Corridors run along every even row and column, so each storage cell
    (odd, odd) touches four corridor cells and the corridor network stays
    connected no matter which storage cells become obstacles. Zone F is the
    band of storage cells nearest the station; the rest are scattered
    uniformly across A-E.
    """
    width, height = scale.grid_dims
    rng = random.Random(seed)
    station = (width // 2, 0)

    lattice = [(x, y) for x in range(1, width, 2) for y in range(1, height, 2)]
    n_obstacles = int(len(lattice) * OBSTACLE_FRACTION)
    shuffled = lattice[:]
    rng.shuffle(shuffled)
    obstacles = frozenset(shuffled[:n_obstacles])
    storage = sorted(c for c in lattice if c not in obstacles)

    sx, sy = station
    storage.sort(key=lambda c: (abs(c[0] - sx) + abs(c[1] - sy), c))
    n_f = -(-len(storage) // 6)  # ceil division
    zone_of = {cell: "F" for cell in storage[:n_f]}

    rest = storage[n_f:]
    rng.shuffle(rest)
    for i, cell in enumerate(rest):
        zone_of[cell] = ZONES[i % 5]  # A..E round-robin over a shuffle

    return GridMap(width=width, height=height, station=station,
                   obstacles=obstacles, zone_of=zone_of)


def open_grid(width: int, height: int,
              obstacles: frozenset[Cell] = frozenset()) -> GridMap:
    """Bare unzoned grid, mainly for tests and tiny training environments."""
    station = (width // 2, 0)
    return GridMap(width=width, height=height, station=station,
                   obstacles=obstacles - {station}, zone_of={})


def storage_coordinate(grid: GridMap, zone: str, seed: int | random.Random) -> Cell:
    """Pick a uniformly random storage cell in `zone`.

    Multiple orders may share a cell, so repeated draws are independent.
    Raises UnknownZoneError for labels absent from the map.
    """
    cells = grid.zone_cells(zone)
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    return rng.choice(cells)
