import random

import pytest
from hypothesis import given, settings, strategies as st

from agvsb.costmodel import delay_cost
from agvsb.layout import WarehouseScale, generate_layout
from agvsb.orders import Dtw, Order, profiles_for
from agvsb.scheduler import (
    DispatchQueue,
    Rule,
    next_batch,
    resort,
    sort_dcsp,
    sort_edt,
    sort_fcfs,
    sort_ldc,
    sort_pdsp,
    sort_spt,
)

GRID = generate_layout(WarehouseScale.SMALL, 1)
DTW = Dtw((1, 2, 4, 4))
PROFILES = profiles_for(DTW)


def order(oid, arrival=0.0, cls="C", offset=None, weight=2.0, pickup=None):
    offset = DTW.offset_s(cls) if offset is None else offset
    return Order(id=oid, pickup=pickup or GRID.zone_cells("A")[0],
                 arrival=arrival, deadline=arrival + offset,
                 weight=weight, price=100.0, cls=cls)


def orders_strategy():
    return st.lists(
        st.builds(
            order,
            oid=st.integers(1, 10_000),
            arrival=st.floats(0, 1000),
            cls=st.sampled_from("ABCD"),
        ),
        min_size=0, max_size=30,
        unique_by=lambda o: o.id)


# -- FCFS ----------------------------------------------------------------------

def test_fcfs_sorts_by_arrival():
    pending = [order(5, arrival=5), order(1, arrival=1), order(3, arrival=3)]
    assert sort_fcfs(pending, now=10) == [1, 3, 5]


def test_fcfs_stable_for_equal_arrivals():
    pending = [order(9, arrival=2), order(4, arrival=2), order(7, arrival=2)]
    assert sort_fcfs(pending, now=10) == [9, 4, 7]


@given(orders_strategy())
@settings(max_examples=50, deadline=None)
def test_fcfs_permutation(pending):
    assert sorted(sort_fcfs(pending, 0)) == sorted(o.id for o in pending)


# -- SPT -----------------------------------------------------------------------

def test_spt_sorts_by_station_distance():
    cells = sorted(GRID.zone_of, key=lambda c: GRID.station_distances[c])
    far, mid, near = cells[-1], cells[len(cells) // 2], cells[0]
    pending = [order(1, pickup=far), order(2, pickup=near), order(3, pickup=mid)]
    assert sort_spt(pending, 0, GRID) == [2, 3, 1]


def test_spt_ties_broken_by_arrival():
    cell = GRID.zone_cells("F")[0]
    pending = [order(1, arrival=9, pickup=cell), order(2, arrival=3, pickup=cell)]
    assert sort_spt(pending, 0, GRID) == [2, 1]


# -- EDT -----------------------------------------------------------------------

def test_edt_sorts_by_deadline():
    pending = [order(1, offset=300), order(2, offset=100), order(3, offset=200)]
    assert sort_edt(pending, 0) == [2, 3, 1]


def test_edt_equal_deadlines_earlier_arrival_first():
    pending = [order(1, arrival=50, offset=100), order(2, arrival=20, offset=130)]
    # both deadlines are 150; order 2 arrived first
    assert sort_edt(pending, 0) == [2, 1]


# -- LDC -----------------------------------------------------------------------

def test_ldc_past_deadline_precedes_pre_deadline():
    late = order(1, arrival=0.0, cls="B")
    fresh = order(2, arrival=7000.0, cls="B")
    ranked = sort_ldc([fresh, late], now=7300.0, profiles=PROFILES)
    assert ranked[0] == 1


def test_ldc_all_zero_costs_fall_back_to_deadline():
    pending = [order(1, arrival=0, cls="D", offset=9000),
               order(2, arrival=0, cls="D", offset=7000),
               order(3, arrival=0, cls="D", offset=8000)]
    assert sort_ldc(pending, now=0, profiles=PROFILES) == [2, 3, 1]


def test_ldc_scores_match_direct_curve_evaluation():
    rng = random.Random(4)
    pending = [order(i, arrival=rng.uniform(0, 5000), cls=rng.choice("ABCD"))
               for i in range(1, 40)]
    now, est = 6000.0, 75.0
    ranked = sort_ldc(pending, now, PROFILES, trip_estimate_s=est)
    # oracle: re-evaluate the projected cost independently per queue position
    scores = {}
    for pos, o in enumerate(pending):
        scores[o.id] = delay_cost(PROFILES[o.cls], now + (pos + 1) * est - o.arrival)
    costs = [scores[i] for i in ranked]
    assert costs == sorted(costs, reverse=True)


# -- PDSP ----------------------------------------------------------------------

def test_pdsp_class_then_tolerance():
    pending = [order(1, cls="C", offset=10), order(2, cls="A", offset=50),
               order(3, cls="A", offset=20)]
    assert sort_pdsp(pending, 0) == [3, 2, 1]


def test_pdsp_same_class_uses_tolerance_window():
    pending = [order(1, cls="B", offset=500), order(2, cls="B", offset=100),
               order(3, cls="B", offset=300)]
    assert sort_pdsp(pending, 0) == [2, 3, 1]


def test_pdsp_class_block_property():
    rng = random.Random(9)
    pending = [order(i, arrival=rng.uniform(0, 100), cls=rng.choice("ABCD"))
               for i in range(1, 60)]
    ranked = sort_pdsp(pending, 0)
    by_id = {o.id: o for o in pending}
    ranks = {"A": 0, "B": 1, "C": 2, "D": 3}
    classes = [ranks[by_id[i].cls] for i in ranked]
    assert classes == sorted(classes)


# -- DCSP ----------------------------------------------------------------------

def test_dcsp_capped_order_first():
    capped = order(1, arrival=0.0, cls="A")          # far past deadline, at cap
    accruing = order(2, arrival=7100.0, cls="A")     # still on the ramp
    ranked = sort_dcsp([accruing, capped], now=7200.0, profiles=PROFILES)
    assert ranked[0] == 1


def test_dcsp_deterministic_tiebreak():
    a = order(1, arrival=0, cls="D", offset=5000)
    b = order(2, arrival=0, cls="D", offset=5000)
    first = sort_dcsp([a, b], now=100, profiles=PROFILES)
    second = sort_dcsp([b, a], now=100, profiles=PROFILES)
    assert first == second == [1, 2]


def test_dcsp_ranking_matches_curve_oracle():
    rng = random.Random(17)
    pending = [order(i, arrival=rng.uniform(0, 8000), cls=rng.choice("ABCD"))
               for i in range(1, 1001)]
    now, interval = 9000.0, 10.0
    ranked = sort_dcsp(pending, now, PROFILES, resort_interval_s=interval)
    by_id = {o.id: o for o in pending}
    scores = []
    for oid in ranked:
        o = by_id[oid]
        scores.append(delay_cost(PROFILES[o.cls], now - o.arrival + interval))
    assert scores == sorted(scores, reverse=True)


# -- generic sort properties -----------------------------------------------------

@given(orders_strategy(), st.floats(0, 2000))
@settings(max_examples=40, deadline=None)
def test_every_rule_returns_a_permutation(pending, now):
    for rule_sort in (lambda: sort_fcfs(pending, now),
                      lambda: sort_spt(pending, now, GRID),
                      lambda: sort_edt(pending, now),
                      lambda: sort_ldc(pending, now, PROFILES),
                      lambda: sort_pdsp(pending, now),
                      lambda: sort_dcsp(pending, now, PROFILES)):
        assert sorted(rule_sort()) == sorted(o.id for o in pending)


@given(orders_strategy(), st.floats(0, 2000))
@settings(max_examples=30, deadline=None)
def test_sorts_are_idempotent(pending, now):
    """Comparator consistency: resorting sorted output changes nothing."""
    queue = DispatchQueue(rule=Rule.PDSP, pending=list(pending))
    resort(queue, now)
    first = [o.id for o in queue.pending]
    resort(queue, now)
    assert [o.id for o in queue.pending] == first


# -- batching -------------------------------------------------------------------

def test_next_batch_takes_first_four():
    queue = DispatchQueue(rule=Rule.FCFS,
                          pending=[order(i, arrival=i) for i in range(1, 7)])
    batch = next_batch(queue, capacity=4, weight_limit=270.0)
    assert [o.id for o in batch] == [1, 2, 3, 4]
    assert [o.id for o in queue.pending] == [5, 6]


def test_next_batch_respects_weight_limit():
    queue = DispatchQueue(rule=Rule.FCFS,
                          pending=[order(i, weight=100.0) for i in range(1, 5)])
    batch = next_batch(queue, capacity=4, weight_limit=270.0)
    assert [o.id for o in batch] == [1, 2]
    assert [o.id for o in queue.pending] == [3, 4]


def test_next_batch_skips_overweight_preserving_order():
    queue = DispatchQueue(rule=Rule.FCFS,
                          pending=[order(1, weight=200.0), order(2, weight=100.0),
                                   order(3, weight=50.0)])
    batch = next_batch(queue, capacity=4, weight_limit=270.0)
    assert [o.id for o in batch] == [1, 3]
    assert [o.id for o in queue.pending] == [2]


def test_next_batch_empty_queue():
    queue = DispatchQueue(rule=Rule.FCFS)
    assert next_batch(queue, 4, 270.0) == []


# -- resort ----------------------------------------------------------------------

def test_resort_new_class_a_jumps_ahead_under_pdsp():
    queue = DispatchQueue(rule=Rule.PDSP,
                          pending=[order(1, arrival=0, cls="C")])
    resort(queue, 0)
    queue.add(order(2, arrival=5, cls="A"))
    resort(queue, 5)
    assert [o.id for o in queue.pending] == [2, 1]


def test_resort_fcfs_keeps_relative_order():
    pending = [order(1, arrival=0), order(2, arrival=1), order(3, arrival=2)]
    queue = DispatchQueue(rule=Rule.FCFS, pending=list(pending))
    resort(queue, 10)
    before = [o.id for o in queue.pending]
    resort(queue, 20)
    assert [o.id for o in queue.pending] == before == [1, 2, 3]


def test_resort_updates_timestamp():
    queue = DispatchQueue(rule=Rule.EDT, pending=[order(1)])
    resort(queue, 42.0)
    assert queue.last_resort_tick == 42.0
