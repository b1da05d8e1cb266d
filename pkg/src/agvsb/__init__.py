"""Deterministic multi-AGV warehouse simulator and priority-sorting benchmark."""

from .costmodel import CostParams, DelayCostProfile, ProfileKind, ProfileParams
from .layout import GridMap, WarehouseScale, generate_layout, open_grid, storage_coordinate
from .orders import Dtw, Order, OrderStream, ingest_csv, synthesize_stream
from .routing import Path, ReservationTable, Trip, astar, order_stops
from .scheduler import DispatchQueue, Rule, next_batch, resort
from .simulator import KpiReport, SimConfig, SimResult, run, service_level, validate_constraints

__version__ = "0.1.0"

__all__ = [
    "CostParams", "DelayCostProfile", "ProfileKind", "ProfileParams",
    "GridMap", "WarehouseScale", "generate_layout", "open_grid", "storage_coordinate",
    "Dtw", "Order", "OrderStream", "ingest_csv", "synthesize_stream",
    "Path", "ReservationTable", "Trip", "astar", "order_stops",
    "DispatchQueue", "Rule", "next_batch", "resort",
    "KpiReport", "SimConfig", "SimResult", "run", "service_level", "validate_constraints",
    "__version__",
]
