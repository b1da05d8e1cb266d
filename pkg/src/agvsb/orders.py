"""Order ingestion and synthesis.

Reads the shipping CSV (ID, warehouse block, customer rating, price, weight)
or synthesizes comparable streams for desk-scale runs. Customer ratings map
to priority classes (1 -> A ... 4/5 -> D); arrivals are spaced by uniform
draws from the order time window and each class gets its deadline offset
from the delay-time-window tuple (hours for classes A..D).
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass

from .costmodel import (  # noqa: F401  (delay_profile_for is part of this surface)
    CapOrderingError,
    DelayCostProfile,
    ProfileKind,
    ProfileParams,
    delay_profile_for,
)
from .layout import Cell, GridMap

log = logging.getLogger(__name__)

CLASSES = ("A", "B", "C", "D")

RATING_TO_CLASS = {1: "A", 2: "B", 3: "C", 4: "D", 5: "D"}

# dataset ranges (weight in kg, price in dollars)
WEIGHT_RANGE = (1.001, 7.846)
PRICE_RANGE = (96.0, 310.0)

# empirical class mix: ratings are near-uniform over 1..5 and both 4 and 5
# collapse to D
DEFAULT_CLASS_MIX = (0.2, 0.2, 0.2, 0.4)

# synthetic zone draw weights; F is the high-demand zone
ZONE_WEIGHTS = {"A": 0.14, "B": 0.14, "C": 0.14, "D": 0.14, "E": 0.14, "F": 0.30}

CSV_COLUMNS = {
    "id": "id",
    "warehouse block": "block",
    "customer rating": "rating",
    "price of the product": "price",
    "weight of the product": "weight",
}


class OrderParseError(ValueError):
    """Malformed row in an order CSV; carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class InvalidProportionsError(ValueError):
    """Class-mix proportions must be nonnegative and sum to one."""


@dataclass(frozen=True)
class Order:
    id: int
    pickup: Cell
    arrival: float      # s
    deadline: float     # s, absolute
    weight: float       # kg
    price: float        # $
    cls: str            # A..D

    def __post_init__(self):
        if self.deadline <= self.arrival:
            raise ValueError(f"order {self.id}: deadline must exceed arrival")

    @property
    def deadline_offset(self) -> float:
        return self.deadline - self.arrival


@dataclass(frozen=True)
class Dtw:
    """Per-class deadline offsets, configured in hours."""

    hours: tuple[float, float, float, float]

    def __post_init__(self):
        a, b, c, d = self.hours
        if not (0 < a <= b <= c and b <= d):
            raise ValueError(
                f"deadline windows must be positive and ordered A<=B<=C,D: {self.hours}"
            )

    def offset_s(self, cls: str) -> float:
        return self.hours[CLASSES.index(cls)] * 3600.0

    def label(self) -> str:
        def fmt(h: float) -> str:
            return f"{h:g}"
        return "(" + ",".join(fmt(h) for h in self.hours) + ")"


@dataclass(frozen=True)
class OrderStream:
    orders: tuple[Order, ...]
    owt: tuple[float, float]    # inter-arrival window, s
    dtw: Dtw

    def __post_init__(self):
        times = [o.arrival for o in self.orders]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("order arrivals must be nondecreasing")

    @property
    def horizon(self) -> float:
        return self.orders[-1].arrival if self.orders else 0.0

    def mean_price(self) -> float:
        return sum(o.price for o in self.orders) / len(self.orders)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "x", "y", "t_o", "t_dd", "weight_kg", "price", "class"])
            for o in self.orders:
                writer.writerow([o.id, o.pickup[0], o.pickup[1], repr(o.arrival),
                                 repr(o.deadline), repr(o.weight), repr(o.price), o.cls])


def load_stream_csv(path, owt: tuple[float, float], dtw: Dtw) -> OrderStream:
    """Read back a stream dump produced by OrderStream.dump_csv."""
    orders = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.DictReader(fh), start=2):
            try:
                orders.append(Order(
                    id=int(row["id"]), pickup=(int(row["x"]), int(row["y"])),
                    arrival=float(row["t_o"]), deadline=float(row["t_dd"]),
                    weight=float(row["weight_kg"]), price=float(row["price"]),
                    cls=row["class"]))
            except (KeyError, ValueError) as exc:
                raise OrderParseError(i, str(exc)) from exc
    return OrderStream(orders=tuple(orders), owt=owt, dtw=dtw)


def _normalize_header(fieldnames) -> dict[str, str]:
    mapping = {}
    for name in fieldnames:
        key = name.strip().lower()
        if key in CSV_COLUMNS:
            mapping[CSV_COLUMNS[key]] = name
    missing = set(CSV_COLUMNS.values()) - set(mapping)
    if missing:
        raise OrderParseError(1, f"missing columns: {sorted(missing)}")
    return mapping


def ingest_csv(path, grid: GridMap, owt: tuple[float, float], dtw: Dtw,
               seed: int = 0) -> OrderStream:
    """Build an OrderStream from the shipping dataset CSV.

    Column match is case- and order-insensitive. Pickups are drawn from the
    row's warehouse-block zone; inter-arrival gaps are uniform over `owt`.
    Out-of-range weights/prices only warn, since they do not break the model.
    """
    rng = random.Random(seed)
    orders = []
    t = 0.0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise OrderParseError(1, "empty file")
        cols = _normalize_header(reader.fieldnames)
        for rownum, row in enumerate(reader, start=2):
            try:
                oid = int(row[cols["id"]])
                block = row[cols["block"]].strip().upper()
                rating = int(row[cols["rating"]])
                price = float(row[cols["price"]])
                grams = float(row[cols["weight"]])
            except ValueError as exc:
                raise OrderParseError(rownum, str(exc)) from exc
            if rating not in RATING_TO_CLASS:
                raise OrderParseError(rownum, f"customer rating {rating} outside 1..5")
            weight = grams / 1000.0
            if not WEIGHT_RANGE[0] <= weight <= WEIGHT_RANGE[1]:
                log.warning("row %d: weight %.3f kg outside dataset range", rownum, weight)
            if not PRICE_RANGE[0] <= price <= PRICE_RANGE[1]:
                log.warning("row %d: price %.2f outside dataset range", rownum, price)
            cls = RATING_TO_CLASS[rating]
            pickup = rng.choice(grid.zone_cells(block))
            if orders:
                t += rng.uniform(*owt)
            orders.append(Order(id=oid, pickup=pickup, arrival=t,
                                deadline=t + dtw.offset_s(cls),
                                weight=weight, price=price, cls=cls))
    return OrderStream(orders=tuple(orders), owt=owt, dtw=dtw)


def synthesize_stream(n: int, grid: GridMap, owt: tuple[float, float], dtw: Dtw,
                      seed: int, class_mix: tuple[float, float, float, float]
                      = DEFAULT_CLASS_MIX) -> OrderStream:
    """Generate a synthetic stream with dataset-like weights and prices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if any(p < 0 for p in class_mix) or abs(sum(class_mix) - 1.0) > 1e-9:
        raise InvalidProportionsError(f"class mix must sum to 1: {class_mix}")
    rng = random.Random(seed)
    zones = [z for z in ZONE_WEIGHTS if z in grid.zones()]
    zone_w = [ZONE_WEIGHTS[z] for z in zones]
    orders = []
    t = 0.0
    for i in range(1, n + 1):
        if orders:
            t += rng.uniform(*owt)
        cls = rng.choices(CLASSES, weights=class_mix)[0]
        zone = rng.choices(zones, weights=zone_w)[0]
        pickup = rng.choice(grid.zone_cells(zone))
        orders.append(Order(
            id=i, pickup=pickup, arrival=t, deadline=t + dtw.offset_s(cls),
            weight=rng.uniform(*WEIGHT_RANGE), price=rng.uniform(*PRICE_RANGE),
            cls=cls))
    return OrderStream(orders=tuple(orders), owt=owt, dtw=dtw)


def profiles_for(dtw: Dtw, params: ProfileParams | None = None
                 ) -> dict[str, DelayCostProfile]:
    """One delay curve per class for the given deadline windows."""
    return {cls: delay_profile_for(cls, dtw.offset_s(cls), params) for cls in CLASSES}
