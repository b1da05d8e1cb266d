"""Benchmark harness: scenario specs, sweeps, reports, and charts.

Scenario files are INI-style key=value sections (see README for the
grammar); any key can be overridden with an AGVSB_<SECTION>_<KEY>
environment variable. Sweep axes expand to a cartesian grid of simulation
points; each point derives its own child seed from the top-level seed and
the point index, so points are independent and the whole sweep is
reproducible row for row.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .agdqn import (
    DivergenceError,
    GridEnv,
    TrainConfig,
    single_goal_sampler,
    train as train_q,
)
from .costmodel import CostParams
from .layout import GridMap, WarehouseScale, generate_layout, open_grid
from .orders import Dtw
from .scheduler import Rule
from .simulator import (
    DeadlockError,
    KpiReport,
    SimConfig,
    child_seed,
    run,
    validate_constraints,
)

CSV_COLUMNS = ["Layout", "FS", "OQ", "OWT", "DTW", "TrT", "WT", "OpT", "E1",
               "CoI", "CoD", "EmT", "RT", "E2", "E", "CoE", "CoT", "SRT",
               "CoS", "Rule", "Seed", "ServiceLevel"]

CHART_KPIS = ("TrT", "WT", "CoD", "CoS")

ENV_PREFIX = "AGVSB"


class SpecError(ValueError):
    """Scenario file failed validation; message carries the field path."""


@dataclass
class ScenarioSpec:
    scales: list[WarehouseScale]
    fleet_sizes: list[int]
    order_counts: list[int]
    owts: list[tuple[float, float]]
    dtws: list[Dtw]
    rules: list[Rule]
    replications: int
    seed: int
    cost: CostParams
    engine: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    def points(self, first_only: bool = False) -> list[SimConfig]:
        """Expand sweep axes (x rules x replications) in point-index order."""

        def axis(values):
            return values[:1] if first_only else values

        configs = []
        index = 0
        for scale in axis(self.scales):
            for fs in axis(self.fleet_sizes):
                for oq in axis(self.order_counts):
                    for owt in axis(self.owts):
                        for dtw in axis(self.dtws):
                            for rule in self.rules:
                                for rep in range(self.replications):
                                    configs.append(SimConfig(
                                        scale=scale, fleet_size=fs, n_orders=oq,
                                        owt=owt, dtw=dtw, cost=self.cost,
                                        rule=rule,
                                        seed=child_seed(self.seed, f"point-{index}"),
                                        **self.engine))
                                    index += 1
        return configs


def _get(section, key, default=None):
    env_key = f"{ENV_PREFIX}_{section.name.upper()}_{key.upper()}"
    if env_key in os.environ:
        return os.environ[env_key]
    value = section.get(key, fallback=None)
    if value is None or value.strip() == "":
        return default
    return value.strip()


def _parse_interval(token: str, where: str) -> tuple[float, float]:
    parts = token.split("-")
    if len(parts) != 2:
        raise SpecError(f"{where}: expected 'lo-hi', got {token!r}")
    lo, hi = float(parts[0]), float(parts[1])
    if hi < lo:
        raise SpecError(f"{where}: interval {token!r} is inverted")
    return lo, hi


def load_spec(path, seed_override: int | None = None) -> ScenarioSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise SpecError(f"cannot read scenario file {path}")
    if "scenario" not in parser:
        raise SpecError("scenario: section missing")
    sc = parser["scenario"]
    try:
        scales = [WarehouseScale(tok.strip().lower())
                  for tok in _get(sc, "layout", "medium").split(",")]
    except ValueError as exc:
        raise SpecError(f"scenario.layout: {exc}") from exc
    try:
        rules = [Rule(tok.strip().lower())
                 for tok in _get(sc, "rules", "fcfs").split(",")]
    except ValueError as exc:
        raise SpecError(f"scenario.rules: {exc}") from exc

    def int_list(key, default):
        raw = _get(sc, key, default)
        try:
            values = [int(tok) for tok in raw.split(",")]
        except ValueError as exc:
            raise SpecError(f"scenario.{key}: {exc}") from exc
        if any(v < 1 for v in values):
            raise SpecError(f"scenario.{key}: values must be >= 1")
        return values

    fleet_sizes = int_list("fleet_size", "3")
    order_counts = int_list("orders", "200")
    owts = [_parse_interval(tok.strip(), "scenario.owt")
            for tok in _get(sc, "owt", "0-5").split(",")]
    dtws = []
    for tok in _get(sc, "dtw", "1,2,4,4").split(";"):
        hours = tuple(float(v) for v in tok.strip().split(","))
        if len(hours) != 4:
            raise SpecError(f"scenario.dtw: need four per-class hours, got {tok!r}")
        try:
            dtws.append(Dtw(hours))
        except ValueError as exc:
            raise SpecError(f"scenario.dtw: {exc}") from exc
    replications = int(_get(sc, "replications", "1"))
    if replications < 1:
        raise SpecError("scenario.replications: must be >= 1")
    seed = seed_override if seed_override is not None else int(_get(sc, "seed", "0"))

    cost_kwargs = {}
    if "cost" in parser:
        co = parser["cost"]
        mapping = {"delta1": "delta1", "delta2": "delta2", "ep": "ep",
                   "gamma": "gamma", "uihc": "uihc_per_min", "beta": "beta",
                   "w_t": "w_t", "self_weight": "self_weight",
                   "payload_limit": "payload_limit", "speed": "speed",
                   "battery_budget": "battery_budget"}
        for key, attr in mapping.items():
            raw = _get(co, key)
            if raw is not None:
                try:
                    cost_kwargs[attr] = float(raw)
                except ValueError as exc:
                    raise SpecError(f"cost.{key}: {exc}") from exc
    try:
        cost = CostParams(**cost_kwargs)
    except ValueError as exc:
        raise SpecError(f"cost: {exc}") from exc

    engine = {}
    if "engine" in parser:
        en = parser["engine"]
        for key, conv in (("tick_seconds", float), ("resort_interval", float),
                          ("ldc_trip_estimate_s", float),
                          ("deadlock_wait_limit", int), ("stall_limit", int)):
            raw = _get(en, key)
            if raw is not None:
                try:
                    engine[key] = conv(raw)
                except ValueError as exc:
                    raise SpecError(f"engine.{key}: {exc}") from exc

    train = {}
    if "train" in parser:
        tr = parser["train"]
        for key, conv, default in (
                ("grid", str, "open:5"), ("n_agvs", int, 1),
                ("episodes", int, 500), ("max_steps", int, 200),
                ("learning_rate", float, 5e-3), ("xi", float, 0.3),
                ("epsilon_decay", float, 0.995), ("hidden", int, 64),
                ("target_sync", int, 200), ("batch_size", int, 64)):
            raw = _get(tr, key)
            try:
                train[key] = conv(raw) if raw is not None else default
            except ValueError as exc:
                raise SpecError(f"train.{key}: {exc}") from exc

    return ScenarioSpec(scales=scales, fleet_sizes=fleet_sizes,
                        order_counts=order_counts, owts=owts, dtws=dtws,
                        rules=rules, replications=replications, seed=seed,
                        cost=cost, engine=engine, train=train)


# -- row assembly ------------------------------------------------------------


def report_row(config: SimConfig, report: KpiReport) -> list[str]:
    lo, hi = config.owt
    return [config.scale.value, str(config.fleet_size), str(config.n_orders),
            f"{lo:g}-{hi:g}", config.dtw.label(),
            repr(report.trt), repr(report.wt), repr(report.opt),
            repr(report.e1), repr(report.coi), repr(report.cod),
            repr(report.emt), repr(report.rt), repr(report.e2), repr(report.e),
            repr(report.coe), repr(report.cot), repr(report.srt),
            repr(report.cos), config.rule.value, str(config.seed),
            repr(report.service_level)]


def _run_point(args: tuple[int, SimConfig]) -> tuple[int, list[str] | None, str | None]:
    index, config = args
    try:
        result = run(config)
        problems = result.report.identity_errors()
        problems += [str(v) for v in validate_constraints(result)]
        if problems:
            return index, None, "; ".join(problems)
        return index, report_row(config, result.report), None
    except (DeadlockError, ValueError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def run_scenario(spec: ScenarioSpec, out_path, jobs: int = 1,
                 first_only: bool = False) -> tuple[int, int]:
    """Run every point and write the results CSV; failures go to a sidecar.

    Returns (ok_count, failed_count).
    """
    points = list(enumerate(spec.points(first_only=first_only)))
    results: dict[int, list[str]] = {}
    errors: dict[int, str] = {}
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            for index, row, err in pool.map(_run_point, points):
                if row is not None:
                    results[index] = row
                else:
                    errors[index] = err
    else:
        for point in points:
            index, row, err = _run_point(point)
            if row is not None:
                results[index] = row
            else:
                errors[index] = err

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for index in sorted(results):
            writer.writerow(results[index])
    if errors:
        err_path = out_path.with_name(out_path.stem + "_errors.csv")
        with open(err_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["PointIndex", "Error"])
            for index in sorted(errors):
                writer.writerow([index, errors[index]])
    return len(results), len(errors)


# -- comparison and charts ----------------------------------------------------


def _chart_backend():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "agvsb"
    import matplotlib.pyplot as plt

    return plt


def compare_rules(results_csv, out_dir) -> list[dict]:
    """Aggregate a results CSV per (layout, rule) and emit charts + summary.

    Returns the summary rows; also writes summary.csv and one deterministic
    SVG bar chart per headline KPI into `out_dir`.
    """
    with open(results_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SpecError(f"{results_csv}: no data rows")

    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["Layout"], row["Rule"]), []).append(row)

    summary = []
    for (layout, rule), members in sorted(groups.items()):
        entry = {"Layout": layout, "Rule": rule, "Points": len(members)}
        for kpi in ("TrT", "WT", "OpT", "CoI", "CoD", "CoE", "CoT", "CoS",
                    "ServiceLevel"):
            entry[kpi] = sum(float(m[kpi]) for m in members) / len(members)
        summary.append(entry)

    # delay-cost reduction of the proposed rules vs the best classical baseline
    for layout in sorted({s["Layout"] for s in summary}):
        rows_l = [s for s in summary if s["Layout"] == layout]
        base = [s["CoD"] for s in rows_l if s["Rule"] in ("fcfs", "spt", "edt", "ldc")]
        ours = [s["CoD"] for s in rows_l if s["Rule"] in ("pdsp", "dcsp")]
        if base and ours and min(base) > 0:
            reduction = 100.0 * (1.0 - min(ours) / min(base))
            summary.append({"Layout": layout, "Rule": "pdsp/dcsp-vs-best-baseline",
                            "Points": 0, "CoD": min(ours),
                            "DelayCostReductionPct": round(reduction, 2)})

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fields = ["Layout", "Rule", "Points", "TrT", "WT", "OpT", "CoI", "CoD",
              "CoE", "CoT", "CoS", "ServiceLevel", "DelayCostReductionPct"]
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for entry in summary:
            writer.writerow({k: entry.get(k, "") for k in fields})

    plt = _chart_backend()
    layouts = sorted({layout for layout, _ in groups})
    rules = sorted({rule for _, rule in groups})
    for kpi in CHART_KPIS:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        width = 0.8 / len(rules)
        for ri, rule in enumerate(rules):
            values = []
            for layout in layouts:
                members = groups.get((layout, rule), [])
                values.append(sum(float(m[kpi]) for m in members) / len(members)
                              if members else 0.0)
            ax.bar([li + ri * width for li in range(len(layouts))], values,
                   width=width, label=rule)
        ax.set_xticks([li + 0.4 - width / 2 for li in range(len(layouts))])
        ax.set_xticklabels(layouts)
        ax.set_ylabel(kpi)
        ax.set_title(f"{kpi} by layout and rule")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out_dir / f"kpi_{kpi.lower()}.svg", format="svg",
                    metadata={"Date": None})
        plt.close(fig)
    return summary


# -- training orchestration ---------------------------------------------------


def _train_grid(token: str, seed: int) -> GridMap:
    if token.startswith("open:"):
        n = int(token.split(":", 1)[1])
        return open_grid(n, n)
    return generate_layout(WarehouseScale(token), child_seed(seed, "map"))


def train_agent(spec: ScenarioSpec, out_dir) -> Path:
    """Train the Q-learner per the spec's [train] section; emit curves + params."""
    tr = dict(spec.train)
    grid = _train_grid(tr.pop("grid", "open:5"), spec.seed)
    n_agvs = tr.pop("n_agvs", 1)
    env = GridEnv(grid, n_agvs=n_agvs)
    config = TrainConfig(seed=spec.seed, **tr)
    result = train_q(env, single_goal_sampler(grid), config)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves_path = out_dir / "curves.csv"
    with open(curves_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "cumulativeReward", "meanLoss", "epsilon"])
        for stat in result.curves:
            writer.writerow([stat.episode, repr(stat.cumulative_reward),
                             repr(stat.mean_loss), repr(stat.epsilon)])
    result.q.save(out_dir / "qparams.npz")
    return curves_path


# -- replay --------------------------------------------------------------------


def replay_trace(path) -> dict:
    """Re-walk an event trace and verify the cell-exclusivity invariant."""
    positions: dict[int, tuple[int, int]] = {}
    station = None
    conflicts = 0
    moves = 0
    deliveries = 0
    last_tick = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            tick = int(row["tick"])
            agv = int(row["agv"])
            event = row["event"]
            cell = (int(row["x"]), int(row["y"]))
            last_tick = max(last_tick, tick)
            if event == "init":
                station = cell
                positions[agv] = cell
            elif event == "move":
                positions[agv] = cell
                moves += 1
                others = {a: c for a, c in positions.items() if a != agv}
                if cell != station and cell in others.values():
                    conflicts += 1
            elif event == "deliver":
                deliveries += 1
    return {"agvs": len(positions), "moves": moves, "deliveries": deliveries,
            "conflicts": conflicts, "makespan": last_tick}


# -- entry point ----------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="agvsb",
        description="Multi-AGV warehouse scheduling benchmark harness")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="concurrent sweep points")
    parser.add_argument("--out-dir", default="out", help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in (("simulate", "run the first point of a scenario"),
                            ("sweep", "run the full sweep grid"),
                            ("train", "train the Q-learning agent")):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("spec")
    sub.add_parser("compare", help="summarize a results CSV").add_argument("results")
    sub.add_parser("replay", help="check an event trace").add_argument("trace")

    args = parser.parse_args(argv)
    out_dir = Path(args.out_dir)
    try:
        if args.verb in ("simulate", "sweep"):
            spec = load_spec(args.spec, seed_override=args.seed)
            out_path = out_dir / "results.csv"
            ok, failed = run_scenario(spec, out_path, jobs=args.jobs,
                                      first_only=args.verb == "simulate")
            print(f"{ok} point(s) written to {out_path}"
                  + (f"; {failed} failed (see sidecar)" if failed else ""))
            if args.format == "json":
                _csv_to_json(out_path)
            return 0 if not failed else 2
        if args.verb == "compare":
            summary = compare_rules(args.results, out_dir)
            for entry in summary:
                print(entry)
            return 0
        if args.verb == "train":
            spec = load_spec(args.spec, seed_override=args.seed)
            curves = train_agent(spec, out_dir)
            print(f"curves written to {curves}")
            return 0
        if args.verb == "replay":
            stats = replay_trace(args.trace)
            print(stats)
            return 0 if stats["conflicts"] == 0 else 2
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DeadlockError, DivergenceError) as exc:
        print(f"abort: {exc}", file=sys.stderr)
        return 2
    return 0


def _csv_to_json(path: Path) -> None:
    import json

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    sys.exit(main())
