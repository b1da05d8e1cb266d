"""Monetary accounting: power, waiting/delay decomposition, and the objective.

Power draw is affine in total carried mass (tare + payload), calibrated so a
fully loaded vehicle (450 kg tare + 270 kg payload) draws 201.6 W, i.e. a
42 Ah x 24 V = 1008 Wh battery over a 5 h full-load shift. Time costs combine
inventory holding (linear in waiting minutes) with class-specific delay
penalty curves; both convert to dollars so the system objective can trade
them off against energy cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import math

MINUTES_PER_YEAR = 365 * 24 * 60

# battery calibration: 1008 Wh over 5 h at full load (720 kg total)
FULL_LOAD_WATTS = 1008.0 / 5.0
DEFAULT_DELTA2 = FULL_LOAD_WATTS / 3.0
DEFAULT_DELTA1 = (FULL_LOAD_WATTS - DEFAULT_DELTA2) / 720.0


class ProfileKind(Enum):
    EXPEDITE = "expedite"
    FIXED_DATE = "fixedDate"
    STANDARD_URGENCY = "standardUrgency"
    INTANGIBLE = "intangible"


class CapOrderingError(ValueError):
    """Delay-cost caps must satisfy C_A >= C_B >= C_C >= C_D."""


class WeightRangeError(ValueError):
    """Objective weight must lie in [0, 1]."""


@dataclass(frozen=True)
class DelayCostProfile:
    """One piecewise delay-penalty curve, in dollars of waiting time.

    `deadline_offset` is the class's tolerance window (deadline minus
    arrival) in seconds; `saturation_time` is where the ramped curves hit
    their cap. `rate` is the linear slope for expedite/intangible and the
    exponent for the standard-urgency curve.
    """

    kind: ProfileKind
    rate: float
    cap: float
    deadline_offset: float
    saturation_time: float

    def __post_init__(self):
        ramped = (ProfileKind.STANDARD_URGENCY, ProfileKind.INTANGIBLE)
        if self.kind in ramped and self.saturation_time <= self.deadline_offset:
            raise ValueError(
                f"{self.kind.value}: saturation_time must exceed deadline_offset"
            )
        if self.kind is ProfileKind.STANDARD_URGENCY and self.cap < 1.0:
            # the exponential branch starts at exp(0) = 1, so a smaller cap
            # could never bound the curve
            raise ValueError("standardUrgency cap must be >= 1")

    def cost(self, waiting_s: float) -> float:
        return delay_cost(self, waiting_s)


@dataclass(frozen=True)
class CostParams:
    """All monetary and physical constants for one scenario."""

    delta1: float = DEFAULT_DELTA1        # W per kg of carried mass
    delta2: float = DEFAULT_DELTA2        # load-independent W
    ep: float = 0.0120                    # $ per Wh
    gamma: float = 0.25                   # annual inventory holding rate
    uihc_per_min: float | None = None     # $ per minute per package; None = derive from stream
    beta: float = 1.0                     # delay-cost weight in the time cost
    w_t: float = 0.5                      # energy-vs-time objective weight
    self_weight: float = 450.0            # kg
    payload_limit: float = 270.0          # kg
    speed: float = 1.0                    # m/s
    battery_budget: float = 18000.0       # s of travel per charge cycle

    def __post_init__(self):
        if not 0.0 <= self.w_t <= 1.0:
            raise WeightRangeError(f"w_t={self.w_t} outside [0, 1]")
        for name in ("delta1", "delta2", "ep", "gamma", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.speed <= 0 or self.battery_budget <= 0:
            raise ValueError("speed and battery_budget must be positive")


@dataclass
class OrderServiceRecord:
    """Per-order accounting line produced by the simulator."""

    order_id: int
    waiting_time: float        # s, request to pickup
    travel_time: float         # s, pickup to delivery
    delay_time: float          # s, max(0, waiting - deadline offset)
    order_energy: float = 0.0  # Wh attributed to this order
    inventory_cost: float = 0.0
    delay_cost: float = 0.0


def power_unit(carried_weight: float, params: CostParams) -> float:
    """Instantaneous draw in watts for a vehicle carrying `carried_weight` kg
    total (tare included)."""
    return params.delta1 * carried_weight + params.delta2


def leg_energy(carried_weight: float, distance_m: float, params: CostParams) -> float:
    """Wh consumed moving `distance_m` at constant speed with constant load."""
    return power_unit(carried_weight, params) * (distance_m / params.speed) / 3600.0


def waiting_time(service_start: float, request: float) -> float:
    return max(0.0, service_start - request)


def delay_cost(profile: DelayCostProfile, waiting_s: float) -> float:
    """Evaluate the class delay curve at a given waiting time.

    Expedite penalises immediately (linear from arrival, cap at the
    deadline); fixed-date steps to its cap at the deadline; standard-urgency
    ramps exponentially between deadline and saturation; intangible ramps
    linearly over the same window.
    """
    off = profile.deadline_offset
    sat = profile.saturation_time
    kind = profile.kind
    if kind is ProfileKind.EXPEDITE:
        if waiting_s < off:
            return min(profile.rate * waiting_s, profile.cap)
        return profile.cap
    if waiting_s < off:
        return 0.0
    if kind is ProfileKind.FIXED_DATE:
        return profile.cap
    if waiting_s >= sat:
        return profile.cap
    delay = waiting_s - off
    if kind is ProfileKind.STANDARD_URGENCY:
        return min(math.exp(profile.rate * delay), profile.cap)
    return min(profile.rate * delay, profile.cap)  # intangible


def inventory_cost(waiting_s: float, uihc_per_min: float) -> float:
    """Holding cost in dollars for one package waiting `waiting_s` seconds."""
    return uihc_per_min * (waiting_s / 60.0)


def uihc_per_minute(gamma: float, annual_inventory_cost: float,
                    package_quantity: int) -> float:
    """Unit inventory holding cost in $/min/package from annual figures."""
    return gamma * annual_inventory_cost / (MINUTES_PER_YEAR * package_quantity)


def time_cost(records, params: CostParams) -> float:
    """Total time-related cost: inventory plus beta-weighted delay."""
    coi = sum(r.inventory_cost for r in records)
    cod = sum(r.delay_cost for r in records)
    return coi + params.beta * cod


def energy_cost(total_energy_wh: float, params: CostParams) -> float:
    return params.ep * total_energy_wh


def system_objective(energy_cost_usd: float, time_cost_usd: float,
                     w_t: float) -> float:
    """Weighted objective F = w_t * energy + (1 - w_t) * time."""
    if not 0.0 <= w_t <= 1.0:
        raise WeightRangeError(f"w_t={w_t} outside [0, 1]")
    return w_t * energy_cost_usd + (1.0 - w_t) * time_cost_usd


# -- class profile construction ------------------------------------------

DEFAULT_CAPS = {"A": 2.0, "B": 1.5, "C": 1.0, "D": 0.5}

CLASS_KINDS = {
    "A": ProfileKind.EXPEDITE,
    "B": ProfileKind.FIXED_DATE,
    "C": ProfileKind.STANDARD_URGENCY,
    "D": ProfileKind.INTANGIBLE,
}


@dataclass(frozen=True)
class ProfileParams:
    """Free parameters of the four class curves.

    Rates are derived, not configured: the expedite line reaches its cap
    exactly at the deadline and the ramped curves reach theirs exactly at
    saturation, which defaults to twice the deadline offset.
    """

    caps: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CAPS))
    saturation_factor: float = 2.0

    def __post_init__(self):
        ordered = [self.caps[c] for c in "ABCD"]
        if not all(a >= b for a, b in zip(ordered, ordered[1:])):
            raise CapOrderingError(f"caps must be ordered A>=B>=C>=D, got {self.caps}")
        if self.caps["C"] < 1.0:
            # the standard-urgency exponential starts at exp(0) = 1
            raise ValueError("class-C (standard urgency) cap must be >= 1")


def delay_profile_for(cls: str, deadline_offset_s: float,
                      params: ProfileParams | None = None) -> DelayCostProfile:
    """Build the class's delay curve for a given tolerance window."""
    params = params or ProfileParams()
    kind = CLASS_KINDS[cls]
    cap = params.caps[cls]
    sat = params.saturation_factor * deadline_offset_s
    window = sat - deadline_offset_s
    if kind is ProfileKind.EXPEDITE:
        rate = cap / deadline_offset_s if deadline_offset_s > 0 else 0.0
    elif kind is ProfileKind.STANDARD_URGENCY:
        rate = math.log(cap) / window
    elif kind is ProfileKind.INTANGIBLE:
        rate = cap / window
    else:
        rate = 0.0
    return DelayCostProfile(kind=kind, rate=rate, cap=cap,
                            deadline_offset=deadline_offset_s,
                            saturation_time=sat)
