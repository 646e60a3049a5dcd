"""Command-line entry point.

Exit codes: 0 success, 2 config/schema error, 3 infeasible model,
4 simulation error (deadlock, missing profile data).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from .config import Scenario, load_scenario
from .costmodel import profile_compute, rank_candidates
from .errors import InfeasibleModel, InvalidConfig, PipeschedError
from .gantt import render_svg
from .memory import enumerate_candidates
from .network import ProfileStore, plan_buckets, profile_links
from .planner import plan_by_name, plan_for
from .simulator import queue_analysis, simulate
from .taskgraph import build_task_graph
from .tuner import TuningPolicy, run_adaptive

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SIM = 0, 2, 3, 4

log = logging.getLogger("pipesched")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


class Output:
    def __init__(self, out_dir: Optional[str], fmt: str):
        self.dir = Path(out_dir) if out_dir else None
        self.fmt = fmt
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        if self.dir:
            (self.dir / name).write_text(text)
            log.info("wrote %s", self.dir / name)

    def emit(self, obj, text: str) -> None:
        sys.stdout.write(dumps(obj) if self.fmt == "json" else text)


def _table(headers: list[str], rows: list[list]) -> str:
    cells = [headers] + [[f"{c:.6g}" if isinstance(c, float) else str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells) + "\n"


def cmd_simulate(sc: Scenario, args, out: Output) -> int:
    config = sc.plan_config(args.plan, args.k, args.b)
    graph = build_task_graph(sc.model, config)
    plan = plan_by_name(graph, args.plan or sc.plan_selector, config.k)
    result = simulate(plan, sc.model, sc.traces)
    summary = {"schema_version": 1, "plan": plan.name, "time_unit": sc.time_unit, **result.summary()}
    summary["queue_nonempty_launches"] = [
        sum(r.queue_nonempty for r in queue_analysis(result, d)) for d in range(plan.num_devices)
    ]
    out.write("summary.json", dumps(summary))
    timeline = result.timeline_dict()
    if sc.outputs.get("timeline", True):
        out.write("timeline.json", dumps(timeline))
    if sc.outputs.get("gantt", False) or args.gantt:
        out.write("gantt.svg", render_svg(timeline["events"], title=f"{plan.name} k={config.k} b={config.b}"))
    if sc.outputs.get("plan", False):
        out.write("plan.json", dumps(plan.to_dict()))
    if sc.outputs.get("graph", False):
        out.write("graph.json", dumps(graph.to_dict()))
    rows = [
        [d, summary["per_device_busy"][d], summary["per_device_bubble"][d], summary["bubble_fraction"][d],
         summary["observed_peak_bytes"][d]]
        for d in range(plan.num_devices)
    ]
    text = (
        f"plan {plan.name} k={config.k} b={config.b} M={config.micro_batches}\n"
        f"pipeline_length {result.pipeline_length:.6g} {sc.time_unit}\n"
        + _table(["device", "busy", "bubble", "bubble_frac", "peak_bytes"], rows)
    )
    out.emit(summary, text)
    return EXIT_OK


def cmd_enumerate(sc: Scenario, args, out: Output) -> int:
    cands = enumerate_candidates(sc.model, sc.cluster, args.k_max or sc.k_max)
    doc = cands.to_dict()
    out.write("candidates.json", dumps(doc))
    rows = [
        [c["k"], c["b"], c["M"], " ".join(f"{p:.6g}" for p in c["per_device_peak"]), c.get("limit_margin", "inf")]
        for c in doc["candidates"]
    ]
    out.emit(doc, _table(["k", "b", "M", "per_device_peak", "margin"], rows))
    return EXIT_OK


def cmd_compare(sc: Scenario, args, out: Output) -> int:
    cands = enumerate_candidates(sc.model, sc.cluster, args.k_max or sc.k_max)
    policy = sc.policy or TuningPolicy(interval=1.0)
    repeats = args.repeats or policy.profile_repeats
    store = ProfileStore(args.window or policy.window_size)
    buckets = sorted({bk for c in cands.configs for bk in plan_buckets(plan_for(sc.model, c))})
    clock = profile_links(buckets, sc.traces, 0.0, store, repeats)
    ranked = rank_candidates(cands, sc.model, profile_compute(sc.model, {c.b for c in cands.configs}), store)
    doc = {
        "schema_version": 1,
        "profiling_time": clock,
        "ranking": [e.to_dict() for e in ranked],
        "profiles": store.to_dict(),
    }
    out.write("ranking.json", dumps(doc))
    rows = [[i + 1, e.config.k, e.config.b, e.estimated_length, e.throughput] for i, e in enumerate(ranked)]
    out.emit(doc, _table(["rank", "k", "b", "est_length", "est_throughput"], rows))
    return EXIT_OK


def cmd_tune(sc: Scenario, args, out: Output) -> int:
    base = sc.policy or TuningPolicy(interval=100.0)
    policy = TuningPolicy(
        interval=args.interval or base.interval,
        profile_repeats=args.repeats or base.profile_repeats,
        window_size=args.window or base.window_size,
        switch_overhead=base.switch_overhead,
        hysteresis=base.hysteresis if args.hysteresis is None else args.hysteresis,
        k_max=args.k_max or base.k_max or sc.k_max,
    )
    horizon = args.horizon or sc.horizon
    if horizon is None:
        raise InvalidConfig("tune needs a horizon (config 'horizon' or --horizon)")
    run = run_adaptive(sc.model, sc.cluster, sc.traces, policy, horizon)
    lines = run.log_lines()
    out.write("tuning_log.jsonl", "".join(line + "\n" for line in lines))
    series = run.throughput_dict()
    out.write("throughput.json", dumps(series))
    if out.fmt == "json":
        sys.stdout.write("".join(line + "\n" for line in lines))
    else:
        rows = [
            [d.round, d.time, d.chosen.k, d.chosen.b, "yes" if d.switched else "no", d.estimates[0].estimated_length]
            for d in run.decisions
        ]
        sys.stdout.write(_table(["round", "time", "k", "b", "switched", "best_est"], rows))
        sys.stdout.write(f"throughput {run.throughput:.6g} samples/{sc.time_unit} over {run.elapsed:.6g}\n")
    return EXIT_OK


def cmd_gantt(sc: Optional[Scenario], args, out: Output) -> int:
    if args.timeline:
        path = Path(args.timeline)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read timeline {path}: {exc}") from None
        events = doc["events"]
        title = path.name
    else:
        if sc is None:
            raise InvalidConfig("gantt needs --timeline or --config")
        config = sc.plan_config(args.plan, args.k, args.b)
        plan = plan_by_name(build_task_graph(sc.model, config), args.plan or sc.plan_selector, config.k)
        events = simulate(plan, sc.model, sc.traces).timeline_dict()["events"]
        title = f"{plan.name} k={config.k} b={config.b}"
    svg = render_svg(events, title=title)
    if out.dir:
        out.write("gantt.svg", svg)
    else:
        sys.stdout.write(svg)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "enumerate": cmd_enumerate,
    "compare": cmd_compare,
    "tune": cmd_tune,
    "gantt": cmd_gantt,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON file")
    common.add_argument("--seed", type=int, help="override the trace generator seed")
    common.add_argument("--out", help="directory for JSON/SVG artifacts")
    common.add_argument("--format", choices=["json", "text"], default="text")

    parser = argparse.ArgumentParser(prog="pipesched", description="kFkB pipeline schedule simulator and tuner")
    sub = parser.add_subparsers(dest="command", required=True)

    def plan_flags(p):
        p.add_argument("--plan", choices=["gpipe", "1f1b", "kfkb"])
        p.add_argument("--k", type=int)
        p.add_argument("--b", type=int)

    p = sub.add_parser("simulate", parents=[common], help="simulate one iteration of a plan")
    plan_flags(p)
    p.add_argument("--gantt", action="store_true", help="also write gantt.svg")
    p = sub.add_parser("enumerate", parents=[common], help="print the memory-frontier candidates")
    p.add_argument("--k-max", type=int)
    p = sub.add_parser("compare", parents=[common], help="profile links and rank candidates")
    p.add_argument("--k-max", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--window", type=int)
    p = sub.add_parser("tune", parents=[common], help="run the adaptive tuning loop")
    p.add_argument("--k-max", type=int)
    p.add_argument("--interval", type=float)
    p.add_argument("--hysteresis", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--horizon", type=float)
    p = sub.add_parser("gantt", parents=[common], help="render an SVG Gantt chart")
    plan_flags(p)
    p.add_argument("--timeline", help="timeline.json written by 'simulate'")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("PIPESCHED_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.config, args.seed) if args.config else None
        if sc is None and args.command != "gantt":
            raise InvalidConfig(f"{args.command} needs --config")
        return COMMANDS[args.command](sc, args, Output(args.out, args.format))
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleModel as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PipeschedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
