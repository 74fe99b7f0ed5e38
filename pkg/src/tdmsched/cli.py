"""Command-line entry point: trace generation, scheduling, simulation, reports.

Every command is deterministic given identical inputs and seed; the seed
and a schema tag are recorded in the header of every output file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import config as cfgmod
from .controller import offline_recalculate
from .errors import TdmschedError
from .model import ClusterSpec
from .oracle import solve
from .pipeline import run_snapshot
from .scheduler import SchedulerParams
from .simulator import (
    SCHEDULERS,
    BackgroundFlow,
    SimulationConfig,
    SimulationReport,
    Trace,
    compare_schedulers,
    load_trace,
    run,
)
from .tracegen import TraceParams, generate_trace

SCHEMA_PREFIX = "tdmsched"


def _add_threshold_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--g-t", type=float, default=0.005, help="period averaging threshold, seconds")
    parser.add_argument("--e-t", type=float, default=0.10, help="idle injection bound, fraction of period")
    parser.add_argument("--di-pre", type=int, default=72, help="angular discretization")
    parser.add_argument("--a-t", type=float, default=1.10, help="iteration-time ratio threshold")
    parser.add_argument("--o-t", type=int, default=5, help="over-threshold count per window")
    parser.add_argument("--window", type=int, default=10, help="monitor window length")


def _params(args: argparse.Namespace) -> SchedulerParams:
    return SchedulerParams(g_t=args.g_t, e_t=args.e_t, di_pre=args.di_pre)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdmsched",
        description="TDM-based network- and priority-aware scheduling of periodic-traffic jobs",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-trace", help="generate a synthetic arrival trace")
    p.add_argument("--cluster", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=float, default=300.0)
    p.add_argument("--load-target", type=float, default=0.75)
    p.add_argument("--load-max", type=float, default=0.85)
    p.add_argument("--duration-min", type=float, default=37.5)
    p.add_argument("--duration-max", type=float, default=112.5)

    p = sub.add_parser("schedule", help="one-shot scheduling of a workload snapshot")
    p.add_argument("--cluster", required=True)
    p.add_argument("--workloads", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-recalc", action="store_true", help="keep the feasible schemes")
    _add_threshold_flags(p)

    p = sub.add_parser("recalc", help="offline third-stage recalculation of a schemes file")
    p.add_argument("--schemes", required=True, help="output of the schedule command")
    p.add_argument("--cluster", required=True)
    p.add_argument("--workloads", required=True)
    p.add_argument("--out", required=True)
    _add_threshold_flags(p)

    p = sub.add_parser("simulate", help="discrete-event simulation of a trace")
    p.add_argument("--cluster", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--scheduler", choices=SCHEDULERS, default="metronome")
    p.add_argument("--seed", type=int, default=None, help="override the trace seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--tick", type=float, default=0.001)
    p.add_argument("--util-bucket", type=float, default=0.1)
    p.add_argument("--no-monitoring", action="store_true")
    p.add_argument("--rotation-mode", choices=("midpoint", "compact"), default="midpoint")
    p.add_argument("--no-queue", action="store_true", help="reject unplaceable jobs instead of queueing")
    p.add_argument(
        "--congestion",
        action="append",
        default=[],
        metavar="NODE:RATE:START:END",
        help="inject a background flow (repeatable)",
    )
    _add_threshold_flags(p)

    p = sub.add_parser("compare", help="run several schedulers on one trace")
    p.add_argument("--cluster", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--schedulers", default="metronome,agnostic,latency-only,ideal")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--no-queue", action="store_true")
    p.add_argument(
        "--congestion", action="append", default=[], metavar="NODE:RATE:START:END"
    )
    _add_threshold_flags(p)

    p = sub.add_parser("report", help="merge simulation runs into combined CSV files")
    p.add_argument("--runs", nargs="+", required=True, help="run directories with report.json")
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="brute-force reference solve of a snapshot")
    p.add_argument("--cluster", required=True)
    p.add_argument("--workloads", required=True)
    p.add_argument("--out", required=True)
    _add_threshold_flags(p)

    return parser


def _parse_congestion(specs: Sequence[str]) -> tuple:
    flows = []
    for spec in specs:
        parts = spec.split(":")
        if len(parts) != 4:
            raise TdmschedError(f"bad congestion spec {spec!r}, want NODE:RATE:START:END")
        flows.append(BackgroundFlow(node=parts[0], rate=float(parts[1]), start=float(parts[2]), end=float(parts[3])))
    return tuple(flows)


def _sim_config(args: argparse.Namespace, scheduler: str) -> SimulationConfig:
    return SimulationConfig(
        scheduler=scheduler,
        sigma=args.sigma,
        tick=getattr(args, "tick", 0.001),
        util_bucket=getattr(args, "util_bucket", 0.1),
        g_t=args.g_t,
        e_t=args.e_t,
        di_pre=args.di_pre,
        a_t=args.a_t,
        o_t=args.o_t,
        window=args.window,
        monitoring=not getattr(args, "no_monitoring", False),
        rotation_mode=getattr(args, "rotation_mode", "midpoint"),
        queue_rejected=not getattr(args, "no_queue", False),
        congestion=_parse_congestion(getattr(args, "congestion", [])),
    )


# -- CSV writing ----------------------------------------------------------------


def _write_csv(path: Path, schema: str, seed: int, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# schema={SCHEMA_PREFIX}-{schema}-v1 seed={seed}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])


def write_report_files(reports: Sequence[SimulationReport], outdir: Path, seed: int) -> None:
    """report.json plus the flattened CSV files for one or more runs."""
    outdir.mkdir(parents=True, exist_ok=True)
    payload = {"seed": seed, "runs": [r.to_dict() for r in reports]}
    with open(outdir / "report.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")

    iter_rows: List[List[Any]] = []
    job_rows: List[List[Any]] = []
    link_rows: List[List[Any]] = []
    summary_rows: List[List[Any]] = []
    for rep in reports:
        for job in rep.jobs:
            for i, duration in enumerate(job.iterations):
                iter_rows.append([rep.scheduler, job.workload, job.job, job.priority, i, duration])
            job_rows.append(
                [
                    rep.scheduler,
                    job.workload,
                    job.job,
                    job.priority,
                    int(job.accepted),
                    job.admit_time if job.admit_time is not None else "",
                    job.completion if job.completion is not None else "",
                    len(job.iterations),
                    job.mean_iteration if job.mean_iteration is not None else "",
                    job.avg_per_1000 if job.avg_per_1000 is not None else "",
                    job.pauses,
                ]
            )
        for link in rep.links:
            for start, util in link.series:
                link_rows.append([rep.scheduler, link.node, start, util])
        accepted = sum(1 for j in rep.jobs if j.accepted)
        summary_rows.append(
            [
                rep.scheduler,
                rep.gamma,
                rep.tct if rep.tct is not None else "",
                rep.duration,
                len(rep.pause_events()),
                accepted,
                len(rep.jobs) - accepted,
            ]
        )
    _write_csv(outdir / "iterations.csv", "iterations", seed,
               ["scheduler", "workload", "job", "priority", "iteration", "duration_s"], iter_rows)
    _write_csv(outdir / "jobs.csv", "jobs", seed,
               ["scheduler", "workload", "job", "priority", "accepted", "admit_time_s",
                "completion_s", "iterations", "mean_iteration_s", "avg_per_1000_s", "pauses"], job_rows)
    _write_csv(outdir / "links.csv", "links", seed,
               ["scheduler", "node", "bucket_start_s", "utilization"], link_rows)
    _write_csv(outdir / "summary.csv", "summary", seed,
               ["scheduler", "gamma", "tct_s", "duration_s", "pauses", "accepted", "rejected"], summary_rows)


# -- commands -------------------------------------------------------------------


def cmd_gen_trace(args: argparse.Namespace) -> int:
    cluster = cfgmod.load_cluster(args.cluster)
    params = TraceParams(
        horizon=args.horizon,
        duration_range=(args.duration_min, args.duration_max),
        load_target=args.load_target,
        load_max=args.load_max,
    )
    trace, summary = generate_trace(args.seed, cluster, params)
    cfgmod.dump_json(trace.to_doc(), args.out)
    print(f"trace: {summary.jobs} jobs over {args.horizon}s")
    print(f"load: average {summary.average_load:.3f}, peak {summary.max_load:.3f}")
    print(f"wrote {args.out}")
    return 0


def _snapshot_payload(result, cluster: ClusterSpec, params: SchedulerParams) -> Dict[str, Any]:
    return {
        "di_pre": params.di_pre,
        "placements": dict(sorted(result.placement.assignments.items())),
        "rejected": [{"job": j, "reason": r} for j, r in result.rejected],
        "offsets": dict(sorted(result.offsets.task_shifts.items())),
        "links": [
            {
                "node": node,
                "t_l": scheme.t_l,
                "reference_task": scheme.reference_task,
                "score": scheme.score,
                "skip_phase_three": next(
                    (o.skip_phase_three for o in result.outcomes if o.node == node and o.scheme is not None),
                    True,
                ),
                "indices": dict(sorted(scheme.indices.items())),
                "shifts": dict(sorted(scheme.time_shifts.items())),
            }
            for node, scheme in sorted(result.schemes.items())
        ],
        "scores": [
            {"task": o.task_id, "node": o.node, "score": o.score, "early_return": o.early_return,
             "skip_phase_three": o.skip_phase_three}
            for o in result.outcomes
        ],
    }


def cmd_schedule(args: argparse.Namespace) -> int:
    cluster = cfgmod.load_cluster(args.cluster)
    workloads = cfgmod.load_workloads(args.workloads)
    params = _params(args)
    result = run_snapshot(cluster, workloads, params, recalc=not args.no_recalc)
    cfgmod.dump_json(_snapshot_payload(result, cluster, params), args.out)
    print(f"wrote {args.out}")
    if result.rejected:
        for job, reason in result.rejected:
            print(f"rejected: {job}: {reason}", file=sys.stderr)
        return 3
    return 0


def cmd_recalc(args: argparse.Namespace) -> int:
    cluster = cfgmod.load_cluster(args.cluster)
    workloads = cfgmod.load_workloads(args.workloads)
    params = _params(args)
    doc = cfgmod.load_document(args.schemes)
    from .model import WorkloadIndex

    index = WorkloadIndex(workloads)
    placements = doc["placements"]
    links = []
    touched = 0
    for entry in doc.get("links", []):
        if entry.get("skip_phase_three", True):
            links.append(entry)
            continue
        node = entry["node"]
        tasks = [index.task_by_id[t] for t, n in placements.items() if n == node
                 and not index.task_by_id[t].low_comm]
        scheme = offline_recalculate(tasks, cluster.node(node).link_bandwidth, params, node)
        links.append(
            {
                "node": node,
                "t_l": scheme.t_l,
                "reference_task": scheme.reference_task,
                "score": scheme.score,
                "skip_phase_three": True,
                "indices": dict(sorted(scheme.indices.items())),
                "shifts": dict(sorted(scheme.time_shifts.items())),
            }
        )
        touched += 1
    out = dict(doc)
    out["links"] = links
    cfgmod.dump_json(out, args.out)
    if touched == 0:
        print("notice: every link carries skip_phase_three=1; nothing recalculated")
    else:
        print(f"recalculated {touched} link scheme(s)")
    print(f"wrote {args.out}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cluster = cfgmod.load_cluster(args.cluster)
    trace = load_trace(args.trace)
    if args.seed is not None:
        trace = Trace(seed=args.seed, horizon=trace.horizon, entries=trace.entries)
    config = _sim_config(args, args.scheduler)
    report = run(trace, cluster, config)
    write_report_files([report], Path(args.out), trace.seed)
    print(f"scheduler={report.scheduler} gamma={report.gamma:.4f} tct={report.tct}")
    print(f"wrote {args.out}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cluster = cfgmod.load_cluster(args.cluster)
    trace = load_trace(args.trace)
    if args.seed is not None:
        trace = Trace(seed=args.seed, horizon=trace.horizon, entries=trace.entries)
    names = [s.strip() for s in args.schedulers.split(",") if s.strip()]
    config = _sim_config(args, names[0])
    reports = compare_schedulers(trace, cluster, config, names)
    outdir = Path(args.out)
    write_report_files([reports[n] for n in names], outdir, trace.seed)
    comparison: Dict[str, Any] = {"seed": trace.seed, "schedulers": {}}
    for name in names:
        rep = reports[name]
        comparison["schedulers"][name] = {
            "gamma": rep.gamma,
            "tct": rep.tct,
            "pauses": len(rep.pause_events()),
            "accepted": sum(1 for j in rep.jobs if j.accepted),
        }
    base = names[0]
    for name in names[1:]:
        a, b = comparison["schedulers"][base], comparison["schedulers"][name]
        if a["tct"] and b["tct"]:
            comparison["schedulers"][name]["tct_vs_" + base] = b["tct"] / a["tct"] - 1.0
    cfgmod.dump_json(comparison, outdir / "comparison.json")
    for name in names:
        info = comparison["schedulers"][name]
        print(f"{name}: gamma={info['gamma']:.4f} tct={info['tct']} accepted={info['accepted']}")
    print(f"wrote {outdir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .simulator import JobReport, LinkReport, ReadjustmentEvent, SimulationReport

    reports: List[SimulationReport] = []
    seed = 0
    for run_dir in args.runs:
        payload = json.loads(Path(run_dir, "report.json").read_text(encoding="utf-8"))
        seed = payload["seed"]
        for raw in payload["runs"]:
            jobs = [
                JobReport(
                    job=j["job"], workload=j["workload"], priority=j["priority"],
                    accepted=j["accepted"], admit_time=j["admit_time"], completion=j["completion"],
                    iterations=list(j["iterations"]), pauses=j["pauses"],
                )
                for j in raw["jobs"]
            ]
            links = [
                LinkReport(node=l["node"], capacity=l["capacity"], utilization=l["utilization"],
                           series=[tuple(x) for x in l["series"]])
                for l in raw["links"]
            ]
            readjustments = [ReadjustmentEvent(**r) for r in raw["readjustments"]]
            reports.append(
                SimulationReport(
                    scheduler=raw["scheduler"], seed=raw["seed"], duration=raw["duration"],
                    jobs=jobs, links=links, gamma=raw["gamma"], tct=raw["tct"],
                    readjustments=readjustments, admissions=raw["admissions"],
                )
            )
    write_report_files(reports, Path(args.out), seed)
    print(f"merged {len(reports)} run(s) into {args.out}")
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    cluster = cfgmod.load_cluster(args.cluster)
    workloads = cfgmod.load_workloads(args.workloads)
    params = _params(args)
    result = solve(cluster, workloads, di_pre=args.di_pre, params=params)
    payload = {
        "placement": dict(sorted(result.placement.items())),
        "objective": {
            "gamma": result.objective.gamma,
            "latency": result.objective.latency,
            "psi": result.objective.psi,
        },
        "schemes": {
            node: {"t_l": s.t_l, "indices": dict(sorted(s.indices.items())),
                   "shifts": dict(sorted(s.time_shifts.items()))}
            for node, s in sorted(result.schemes.items())
        },
    }
    cfgmod.dump_json(payload, args.out)
    print(f"gamma={result.objective.gamma:.6f} latency={result.objective.latency:.3f} psi={result.objective.psi}")
    print(f"wrote {args.out}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen-trace": cmd_gen_trace,
        "schedule": cmd_schedule,
        "recalc": cmd_recalc,
        "simulate": cmd_simulate,
        "compare": cmd_compare,
        "report": cmd_report,
        "oracle": cmd_oracle,
    }
    try:
        return handlers[args.cmd](args)
    except TdmschedError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFound", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
