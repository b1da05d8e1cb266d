import logging
import statistics

import pytest
from hypothesis import given, settings, strategies as st

from agvsb.costmodel import CapOrderingError, ProfileKind, ProfileParams
from agvsb.layout import WarehouseScale, generate_layout
from agvsb.orders import (
    Dtw,
    InvalidProportionsError,
    Order,
    OrderParseError,
    delay_profile_for,
    ingest_csv,
    load_stream_csv,
    profiles_for,
    synthesize_stream,
)

GRID = generate_layout(WarehouseScale.SMALL, 1)
DTW = Dtw((1, 2, 4, 4))


def write_csv(path, rows, header=None):
    header = header or ("ID,Warehouse block,Customer rating,"
                        "Price of the product,Weight of the product")
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def test_rating_one_maps_to_class_a(tmp_path):
    path = write_csv(tmp_path / "orders.csv", ["1,A,1,150,2000"])
    stream = ingest_csv(path, GRID, (0, 5), DTW)
    assert stream.orders[0].cls == "A"


def test_rating_five_maps_to_class_d(tmp_path):
    path = write_csv(tmp_path / "orders.csv", ["1,B,5,150,2000"])
    stream = ingest_csv(path, GRID, (0, 5), DTW)
    assert stream.orders[0].cls == "D"


def test_grams_to_kilograms(tmp_path):
    path = write_csv(tmp_path / "orders.csv", ["1,C,3,150,1001"])
    stream = ingest_csv(path, GRID, (0, 5), DTW)
    assert stream.orders[0].weight == pytest.approx(1.001)


def test_header_match_is_case_and_order_insensitive(tmp_path):
    header = "weight of the product,customer RATING,id,PRICE of the product,Warehouse Block"
    path = write_csv(tmp_path / "orders.csv", ["2000,2,7,100,D"], header=header)
    stream = ingest_csv(path, GRID, (0, 5), DTW)
    order = stream.orders[0]
    assert (order.id, order.cls, order.price) == (7, "B", 100.0)


def test_parse_error_carries_row_number(tmp_path):
    path = write_csv(tmp_path / "orders.csv",
                     ["1,A,1,150,2000", "2,A,not-a-number,150,2000"])
    with pytest.raises(OrderParseError) as err:
        ingest_csv(path, GRID, (0, 5), DTW)
    assert err.value.row == 3


def test_out_of_range_weight_warns_not_fatal(tmp_path, caplog):
    path = write_csv(tmp_path / "orders.csv", ["1,A,1,150,9500"])
    with caplog.at_level(logging.WARNING, logger="agvsb.orders"):
        stream = ingest_csv(path, GRID, (0, 5), DTW)
    assert stream.orders[0].weight == pytest.approx(9.5)
    assert any("weight" in record.message for record in caplog.records)


def test_pickup_drawn_from_block_zone(tmp_path):
    path = write_csv(tmp_path / "orders.csv", [f"{i},E,3,150,2000" for i in range(1, 9)])
    stream = ingest_csv(path, GRID, (0, 5), DTW)
    for order in stream.orders:
        assert GRID.zone_of[order.pickup] == "E"


def test_deadline_is_arrival_plus_class_offset(tmp_path):
    path = write_csv(tmp_path / "orders.csv", ["1,A,1,150,2000", "2,A,4,150,2000"])
    stream = ingest_csv(path, GRID, (0, 5), DTW)
    a, d = stream.orders
    assert a.deadline - a.arrival == pytest.approx(3600.0)
    assert d.deadline - d.arrival == pytest.approx(4 * 3600.0)


# -- synthesis ----------------------------------------------------------------

def test_degenerate_mix_all_class_a():
    stream = synthesize_stream(100, GRID, (0, 5), DTW, seed=3, class_mix=(1, 0, 0, 0))
    assert all(o.cls == "A" for o in stream.orders)


def test_zero_window_all_arrive_at_once():
    stream = synthesize_stream(1000, GRID, (0, 0), DTW, seed=3)
    assert all(o.arrival == 0.0 for o in stream.orders)


def test_mean_interarrival_near_window_midpoint():
    stream = synthesize_stream(1000, GRID, (0, 5), DTW, seed=11)
    gaps = [b.arrival - a.arrival
            for a, b in zip(stream.orders, stream.orders[1:])]
    assert statistics.fmean(gaps) == pytest.approx(2.5, abs=0.2)


def test_synthesize_deterministic():
    a = synthesize_stream(50, GRID, (0, 5), DTW, seed=5)
    b = synthesize_stream(50, GRID, (0, 5), DTW, seed=5)
    assert a == b


def test_invalid_proportions_rejected():
    with pytest.raises(InvalidProportionsError):
        synthesize_stream(10, GRID, (0, 5), DTW, seed=1, class_mix=(0.5, 0.5, 0.5, 0.5))


def test_weights_and_prices_in_dataset_range():
    stream = synthesize_stream(300, GRID, (0, 5), DTW, seed=2)
    assert all(1.001 <= o.weight <= 7.846 for o in stream.orders)
    assert all(96.0 <= o.price <= 310.0 for o in stream.orders)


def test_zone_f_is_most_frequent():
    stream = synthesize_stream(2000, GRID, (0, 5), DTW, seed=8)
    from collections import Counter

    freq = Counter(GRID.zone_of[o.pickup] for o in stream.orders)
    assert freq["F"] == max(freq.values())


@given(st.floats(0, 3), st.floats(0, 6), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_arrivals_monotone_for_any_window(lo, extra, seed):
    stream = synthesize_stream(40, GRID, (lo, lo + extra), DTW, seed=seed)
    times = [o.arrival for o in stream.orders]
    assert times == sorted(times)


# -- round trip -----------------------------------------------------------------

def test_stream_dump_load_round_trip(tmp_path):
    stream = synthesize_stream(60, GRID, (0, 5), DTW, seed=4)
    path = tmp_path / "stream.csv"
    stream.dump_csv(path)
    again = load_stream_csv(path, stream.owt, stream.dtw)
    assert again == stream
    path2 = tmp_path / "stream2.csv"
    again.dump_csv(path2)
    assert path.read_text() == path2.read_text()


def test_ingest_then_dump_then_load_identical(tmp_path):
    src = write_csv(tmp_path / "orders.csv",
                    [f"{i},{'ABCDE'[i % 5]},{1 + i % 5},150,2000"
                     for i in range(1, 30)])
    stream = ingest_csv(src, GRID, (0, 5), DTW, seed=9)
    dump = tmp_path / "dump.csv"
    stream.dump_csv(dump)
    assert load_stream_csv(dump, stream.owt, stream.dtw) == stream


# -- profiles and windows ----------------------------------------------------------

def test_delay_profile_kinds_per_class():
    assert delay_profile_for("A", 3600).kind is ProfileKind.EXPEDITE
    assert delay_profile_for("B", 3600).kind is ProfileKind.FIXED_DATE
    assert delay_profile_for("C", 3600).kind is ProfileKind.STANDARD_URGENCY
    assert delay_profile_for("D", 3600).kind is ProfileKind.INTANGIBLE


def test_fixed_date_zero_cost_before_deadline():
    profile = delay_profile_for("B", 3600)
    assert profile.cost(3599.0) == 0.0


def test_cap_ordering_violation_raises():
    with pytest.raises(CapOrderingError):
        profiles_for(DTW, ProfileParams(caps={"A": 0.5, "B": 1.5, "C": 1.0, "D": 2.0}))


def test_dtw_ordering_enforced():
    with pytest.raises(ValueError):
        Dtw((4, 2, 1, 1))
    assert Dtw((1, 2, 4, 4)).offset_s("A") == 3600.0


def test_dtw_label():
    assert Dtw((1, 2, 4, 4)).label() == "(1,2,4,4)"
    assert Dtw((0.3, 1, 3, 3)).label() == "(0.3,1,3,3)"


def test_class_offsets_honor_ordering():
    for hours in [(1, 2, 4, 4), (0.3, 1, 3, 3), (5, 10, 24, 24)]:
        dtw = Dtw(hours)
        offsets = [dtw.offset_s(c) for c in "ABCD"]
        assert offsets[0] <= offsets[1] <= offsets[2]
        assert offsets[1] <= offsets[3]


def test_order_requires_deadline_after_arrival():
    with pytest.raises(ValueError):
        Order(id=1, pickup=(1, 1), arrival=10.0, deadline=10.0,
              weight=2.0, price=100.0, cls="A")
