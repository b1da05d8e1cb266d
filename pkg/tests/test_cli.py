import csv

import pytest

from agvsb.cli import (
    CSV_COLUMNS,
    SpecError,
    compare_rules,
    load_spec,
    main,
    replay_trace,
    report_row,
    run_scenario,
    train_agent,
)
from agvsb.layout import WarehouseScale
from agvsb.orders import Dtw
from agvsb.scheduler import Rule
from agvsb.simulator import SimConfig, run

SPEC = """
[scenario]
layout = small
fleet_size = 2,3
orders = 25
owt = 0-2
dtw = 1,2,4,4
rules = fcfs,pdsp,dcsp
replications = 1
seed = 11

[cost]
ep = 0.012
beta = 1.0
"""


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "scenario.ini"
    path.write_text(SPEC)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_spec_parses_axes(spec_file):
    spec = load_spec(spec_file)
    assert spec.scales == [WarehouseScale.SMALL]
    assert spec.fleet_sizes == [2, 3]
    assert spec.rules == [Rule.FCFS, Rule.PDSP, Rule.DCSP]
    assert spec.dtws == [Dtw((1, 2, 4, 4))]
    assert spec.seed == 11


def test_sweep_emits_cartesian_rows(spec_file, tmp_path):
    out = tmp_path / "results.csv"
    ok, failed = run_scenario(load_spec(spec_file), out)
    assert (ok, failed) == (6, 0)       # 2 fleet sizes x 3 rules
    rows = read_rows(out)
    assert len(rows) == 6
    assert list(rows[0].keys()) == CSV_COLUMNS


def test_rerun_is_byte_identical(spec_file, tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    run_scenario(load_spec(spec_file), out1)
    run_scenario(load_spec(spec_file), out2)
    assert out1.read_bytes() == out2.read_bytes()


def test_emitted_rows_satisfy_identities(spec_file, tmp_path):
    out = tmp_path / "results.csv"
    run_scenario(load_spec(spec_file), out)
    for row in read_rows(out):
        assert float(row["OpT"]) == pytest.approx(
            float(row["TrT"]) + float(row["WT"]), rel=1e-6)
        assert float(row["E"]) == pytest.approx(
            float(row["E1"]) + float(row["E2"]), rel=1e-6)
        assert float(row["CoT"]) == pytest.approx(
            float(row["CoI"]) + float(row["CoD"]), rel=1e-6)
        assert float(row["CoS"]) == pytest.approx(
            float(row["CoE"]) + float(row["CoT"]), rel=1e-6)


def test_parallel_sweep_matches_serial(spec_file, tmp_path):
    serial, parallel = tmp_path / "s.csv", tmp_path / "p.csv"
    run_scenario(load_spec(spec_file), serial, jobs=1)
    run_scenario(load_spec(spec_file), parallel, jobs=2)
    assert serial.read_bytes() == parallel.read_bytes()


def test_env_override(spec_file, monkeypatch):
    monkeypatch.setenv("AGVSB_SCENARIO_ORDERS", "7")
    spec = load_spec(spec_file)
    assert spec.order_counts == [7]


def test_invalid_rule_is_spec_error(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nrules = wrong\n")
    with pytest.raises(SpecError):
        load_spec(path)


def test_inverted_owt_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nowt = 5-0\n")
    with pytest.raises(SpecError):
        load_spec(path)


def test_simulate_runs_first_point_only(spec_file, tmp_path):
    code = main(["--out-dir", str(tmp_path / "out"), "simulate", str(spec_file)])
    assert code == 0
    rows = read_rows(tmp_path / "out" / "results.csv")
    assert len(rows) == 3               # first of each axis, all rules
    assert {r["FS"] for r in rows} == {"2"}


def test_main_exit_code_on_bad_spec(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nlayout = gigantic\n")
    assert main(["--out-dir", str(tmp_path), "simulate", str(bad)]) == 1


def test_json_format_emits_json(spec_file, tmp_path):
    code = main(["--out-dir", str(tmp_path), "--format", "json",
                 "simulate", str(spec_file)])
    assert code == 0
    assert (tmp_path / "results.json").exists()


# -- compare -----------------------------------------------------------------


def results_fixture(tmp_path):
    out = tmp_path / "results.csv"
    spec = load_spec(tmp_path / "scenario.ini")
    run_scenario(spec, out)
    return out


def test_compare_single_row(tmp_path):
    config = SimConfig(scale=WarehouseScale.SMALL, fleet_size=2, n_orders=20,
                       owt=(0, 2), dtw=Dtw((1, 2, 4, 4)), rule=Rule.FCFS, seed=3)
    out = tmp_path / "one.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerow(report_row(config, run(config).report))
    summary = compare_rules(out, tmp_path / "charts")
    assert len([s for s in summary if s["Rule"] == "fcfs"]) == 1
    for kpi in ("trt", "wt", "cod", "cos"):
        assert (tmp_path / "charts" / f"kpi_{kpi}.svg").exists()


def test_compare_delay_reduction_matches_hand_arithmetic(spec_file, tmp_path):
    out = tmp_path / "results.csv"
    run_scenario(load_spec(spec_file), out)
    summary = compare_rules(out, tmp_path / "charts")
    rows = read_rows(out)
    best_base = min(
        sum(float(r["CoD"]) for r in rows if r["Rule"] == rule) / 2
        for rule in ("fcfs",))
    best_ours = min(
        sum(float(r["CoD"]) for r in rows if r["Rule"] == rule) / 2
        for rule in ("pdsp", "dcsp"))
    delta = next((s for s in summary
                  if s["Rule"] == "pdsp/dcsp-vs-best-baseline"), None)
    if best_base > 0:
        assert delta is not None
        assert delta["DelayCostReductionPct"] == pytest.approx(
            round(100 * (1 - best_ours / best_base), 2))


def test_charts_are_byte_stable(spec_file, tmp_path):
    out = tmp_path / "results.csv"
    run_scenario(load_spec(spec_file), out)
    compare_rules(out, tmp_path / "c1")
    compare_rules(out, tmp_path / "c2")
    for kpi in ("trt", "wt", "cod", "cos"):
        a = (tmp_path / "c1" / f"kpi_{kpi}.svg").read_bytes()
        b = (tmp_path / "c2" / f"kpi_{kpi}.svg").read_bytes()
        assert a == b


# -- train -------------------------------------------------------------------


def test_train_verb_emits_curves_and_params(tmp_path):
    path = tmp_path / "train.ini"
    path.write_text("""
[scenario]
seed = 3

[train]
grid = open:5
episodes = 12
max_steps = 20
""")
    curves = train_agent(load_spec(path), tmp_path / "out")
    rows = read_rows(curves)
    assert len(rows) == 12
    assert list(rows[0].keys()) == ["episode", "cumulativeReward", "meanLoss",
                                    "epsilon"]
    assert (tmp_path / "out" / "qparams.npz").exists()


def test_train_determinism(tmp_path):
    path = tmp_path / "train.ini"
    path.write_text("[scenario]\nseed = 5\n\n[train]\nepisodes = 8\nmax_steps = 15\n")
    a = train_agent(load_spec(path), tmp_path / "a")
    b = train_agent(load_spec(path), tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()


# -- replay ------------------------------------------------------------------


def test_replay_trace_counts_and_no_conflicts(tmp_path):
    config = SimConfig(scale=WarehouseScale.SMALL, fleet_size=3, n_orders=30,
                       owt=(0, 2), dtw=Dtw((1, 2, 4, 4)), rule=Rule.SPT, seed=9)
    result = run(config)
    trace = tmp_path / "trace.csv"
    trace.write_text("\n".join(result.trace_lines()) + "\n")
    stats = replay_trace(trace)
    assert stats["agvs"] == 3
    assert stats["deliveries"] == 30
    assert stats["conflicts"] == 0
    assert main(["replay", str(trace)]) == 0
