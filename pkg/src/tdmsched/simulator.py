"""Discrete-event cluster simulator with fair-share link contention.

Jobs iterate compute-then-communicate; concurrently transmitting tasks on a
host link get max-min fair shares capped by their declared rates, so
contention stretches time but never drops bytes.  Under the TDM scheduler
the stop-and-wait controller aligns communication starts to the composed
time shifts and pauses drifting low-priority jobs back into their slots.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from . import config as cfgmod
from .controller import (
    GlobalOffsets,
    MonitorState,
    PauseLowPriority,
    build_affinity_graph,
    compact_scheme,
    detect_pattern_change,
    global_offset,
    monitor_tick,
    offline_recalculate,
)
from .errors import ConfigError, JobRejected, NoFeasibleNode
from .model import (
    ClusterSpec,
    JobSpec,
    Placement,
    Priority,
    TaskSpec,
    WorkloadIndex,
    WorkloadSpec,
    priority_key,
)
from .scheduler import RotationScheme, SchedulerParams, schedule_job

SCHEDULERS = ("metronome", "agnostic", "exclusive", "latency-only", "ideal")


@dataclass(frozen=True)
class BackgroundFlow:
    """Synthetic congestion on one node's host link (an injected flow)."""

    node: str
    rate: float
    start: float
    end: float


@dataclass(frozen=True)
class TrafficChange:
    """Mid-run workload change: the job's compute phase scales by `factor`.

    Models a batch-size change: communication volume stays, computation
    shrinks or grows, so the job's real period and duty cycle drift away
    from the declared pattern until the controller recalibrates.
    """

    job: str
    time: float
    factor: float


@dataclass(frozen=True)
class SimulationConfig:
    scheduler: str = "metronome"
    sigma: float = 0.01            # lognormal compute-time noise
    tick: float = 0.001            # alignment tolerance, seconds
    util_bucket: float = 0.1       # per-link utilization series resolution
    g_t: float = 0.005
    e_t: float = 0.10
    di_pre: int = 72
    a_t: float = 1.10
    o_t: int = 5
    window: int = 10
    monitoring: bool = True
    recalibration: bool = True
    rotation_mode: str = "midpoint"   # "midpoint" | "compact" (stage-3 ablation)
    queue_rejected: bool = True
    congestion: Tuple[BackgroundFlow, ...] = ()
    traffic_changes: Tuple[TrafficChange, ...] = ()

    def __post_init__(self) -> None:
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        if self.sigma < 0 or self.tick <= 0 or self.util_bucket <= 0:
            raise ConfigError("sigma must be >= 0 and tick/util_bucket > 0")
        if self.rotation_mode not in ("midpoint", "compact"):
            raise ConfigError(f"unknown rotation_mode {self.rotation_mode!r}")

    def scheduler_params(self) -> SchedulerParams:
        return SchedulerParams(g_t=self.g_t, e_t=self.e_t, di_pre=self.di_pre)


@dataclass(frozen=True)
class TraceEntry:
    arrival: float
    workload: WorkloadSpec
    iterations: Mapping[str, int]   # per bandwidth-declaring job
    durations: Mapping[str, float]  # per low_comm job

    def run_length(self, job: JobSpec) -> Tuple[Optional[int], Optional[float]]:
        return self.iterations.get(job.id), self.durations.get(job.id)


@dataclass(frozen=True)
class Trace:
    seed: int
    horizon: float
    entries: Tuple[TraceEntry, ...]

    def __post_init__(self) -> None:
        arrivals = [e.arrival for e in self.entries]
        if any(b < a for a, b in zip(arrivals, arrivals[1:])):
            raise ConfigError("trace arrival times must be nondecreasing")

    def to_doc(self) -> Dict[str, Any]:
        entries = []
        for e in self.entries:
            entries.append(
                {
                    "arrival": e.arrival,
                    "workload": cfgmod.workloads_to_doc([e.workload])["workloads"][0],
                    "iterations": dict(e.iterations),
                    "durations": dict(e.durations),
                }
            )
        return {"seed": self.seed, "horizon": self.horizon, "entries": entries}

    @staticmethod
    def from_doc(doc: Mapping[str, Any]) -> "Trace":
        workloads = cfgmod.parse_workloads({"workloads": [e["workload"] for e in doc["entries"]]})
        workloads = cfgmod.renumber_submit_orders(workloads)
        entries = []
        for e, workload in zip(doc["entries"], workloads):
            entries.append(
                TraceEntry(
                    arrival=float(e["arrival"]),
                    workload=workload,
                    iterations={str(k): int(v) for k, v in e.get("iterations", {}).items()},
                    durations={str(k): float(v) for k, v in e.get("durations", {}).items()},
                )
            )
        return Trace(seed=int(doc["seed"]), horizon=float(doc["horizon"]), entries=tuple(entries))


def load_trace(path: str | Path) -> Trace:
    return Trace.from_doc(cfgmod.load_document(path))


@dataclass
class ReadjustmentEvent:
    time: float
    job: str
    kind: str            # "rotate" | "pause" | "recalibrate"
    amount: float
    target_time: Optional[float] = None
    actual_time: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "time": self.time,
            "job": self.job,
            "kind": self.kind,
            "amount": self.amount,
            "target_time": self.target_time,
            "actual_time": self.actual_time,
        }


@dataclass
class JobReport:
    job: str
    workload: str
    priority: str
    accepted: bool
    admit_time: Optional[float]
    completion: Optional[float]
    iterations: List[float] = field(default_factory=list)
    pauses: int = 0

    @property
    def mean_iteration(self) -> Optional[float]:
        return (sum(self.iterations) / len(self.iterations)) if self.iterations else None

    @property
    def avg_per_1000(self) -> Optional[float]:
        mean = self.mean_iteration
        return 1000.0 * mean if mean is not None else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "job": self.job,
            "workload": self.workload,
            "priority": self.priority,
            "accepted": self.accepted,
            "admit_time": self.admit_time,
            "completion": self.completion,
            "iterations": self.iterations,
            "mean_iteration": self.mean_iteration,
            "avg_per_1000": self.avg_per_1000,
            "pauses": self.pauses,
        }


@dataclass
class LinkReport:
    node: str
    capacity: float
    utilization: float
    series: List[Tuple[float, float]] = field(default_factory=list)  # (bucket start, util)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "node": self.node,
            "capacity": self.capacity,
            "utilization": self.utilization,
            "series": [[t, u] for t, u in self.series],
        }


@dataclass
class SimulationReport:
    scheduler: str
    seed: int
    duration: float
    jobs: List[JobReport]
    links: List[LinkReport]
    gamma: float
    tct: Optional[float]
    readjustments: List[ReadjustmentEvent]
    admissions: List[Dict[str, Any]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scheduler": self.scheduler,
            "seed": self.seed,
            "duration": self.duration,
            "gamma": self.gamma,
            "tct": self.tct,
            "jobs": [j.to_dict() for j in self.jobs],
            "links": [l.to_dict() for l in self.links],
            "readjustments": [r.to_dict() for r in self.readjustments],
            "admissions": self.admissions,
        }

    def job_report(self, job_id: str) -> JobReport:
        for j in self.jobs:
            if j.job == job_id:
                return j
        raise KeyError(job_id)

    def pause_events(self) -> List[ReadjustmentEvent]:
        return [r for r in self.readjustments if r.kind == "pause"]


# -- engine internals ---------------------------------------------------------


@dataclass
class _Flow:
    task_id: str
    node: str
    remaining: float
    cap: float
    rate: float = 0.0
    version: int = 0
    background: bool = False


class _Link:
    def __init__(self, node: str, capacity: float):
        self.node = node
        self.capacity = capacity
        self.flows: Dict[str, _Flow] = {}
        self.last_advance = 0.0
        self.segments: List[Tuple[float, float, float]] = []  # (t0, t1, aggregate rate)

    def advance(self, now: float) -> None:
        dt = now - self.last_advance
        if dt > 0 and self.flows:
            aggregate = 0.0
            for flow in self.flows.values():
                flow.remaining -= flow.rate * dt
                aggregate += flow.rate
            if aggregate > 0:
                self.segments.append((self.last_advance, now, aggregate))
        self.last_advance = now

    def reallocate(self) -> None:
        flows = sorted(self.flows.values(), key=lambda f: (f.cap, f.task_id))
        remaining = self.capacity
        count = len(flows)
        for flow in flows:
            share = remaining / count if count else 0.0
            flow.rate = min(flow.cap, share)
            remaining -= flow.rate
            count -= 1


@dataclass
class _JobRun:
    job: JobSpec
    entry_index: int
    uid: int
    iterations_total: Optional[int]
    duration: Optional[float]      # low_comm only
    report: JobReport
    nodes: Dict[str, str] = field(default_factory=dict)  # task -> node
    state: str = "queued"
    iter_idx: int = 0
    iter_start: float = 0.0
    last_comm_start: Optional[float] = None
    comm_started_at: Optional[float] = None
    active_flows: Set[str] = field(default_factory=set)
    pending_realign: bool = False
    first_comm_aligned: bool = False
    monitor: Optional[MonitorState] = None
    rng: Optional[np.random.Generator] = None
    pending_pause_log: Optional[ReadjustmentEvent] = None
    compute_version: int = 0
    compute_factor: float = 1.0
    idle_pad: float = 0.0

    @property
    def is_low_comm(self) -> bool:
        return all(t.low_comm for t in self.job.tasks)

    def traffic_params(self) -> Tuple[float, float, float]:
        """(period, duty, bandwidth) shared by the job's bandwidth tasks."""
        bw_tasks = [t for t in self.job.tasks if not t.low_comm]
        first = bw_tasks[0]
        for t in bw_tasks[1:]:
            if (
                t.period != first.period
                or t.duty_cycle != first.duty_cycle
                or t.bandwidth != first.bandwidth
            ):
                raise ConfigError(
                    f"job {self.job.id}: bandwidth tasks must share one traffic pattern"
                )
        return float(first.period), float(first.duty_cycle), float(first.bandwidth)


class _Engine:
    def __init__(self, trace: Trace, cluster: ClusterSpec, config: SimulationConfig):
        self.trace = trace
        self.cluster = cluster
        self.config = config
        self.params = config.scheduler_params()
        workloads = [e.workload for e in trace.entries]
        self.index = WorkloadIndex(workloads)
        self.placement = Placement(cluster=cluster, index=self.index)
        self.links: Dict[str, _Link] = {
            n.id: _Link(n.id, n.link_bandwidth) for n in cluster.nodes
        }
        self.events: List[Tuple[float, int, str, Any]] = []
        self.seq = 0
        self.now = 0.0
        self.queue: List[str] = []  # FIFO of waiting job ids
        self.jobs: Dict[str, _JobRun] = {}
        self.schemes: Dict[str, RotationScheme] = {}
        self.offsets: GlobalOffsets = GlobalOffsets({}, {}, {})
        self.epochs: Dict[str, float] = {}  # reference job -> last observed comm start
        self.readjustments: List[ReadjustmentEvent] = []
        self.admissions: List[Dict[str, Any]] = []
        self.job_priority = {
            j: min(priority_key(self.index.task_by_id[t]) for t in self.index.tasks_of_job[j])
            for j in self.index.job_by_id
        }
        uid = 0
        for i, entry in enumerate(trace.entries):
            for job in entry.workload.jobs:
                iters, dur = entry.run_length(job)
                run = _JobRun(
                    job=job,
                    entry_index=i,
                    uid=uid,
                    iterations_total=iters,
                    duration=dur,
                    report=JobReport(
                        job=job.id,
                        workload=job.workload_id,
                        priority=job.priority.value,
                        accepted=False,
                        admit_time=None,
                        completion=None,
                    ),
                )
                run.rng = np.random.default_rng([trace.seed, uid])
                self.jobs[job.id] = run
                uid += 1

    # -- event plumbing --

    def push(self, time: float, kind: str, data: Any) -> None:
        self.seq += 1
        heapq.heappush(self.events, (time, self.seq, kind, data))

    def run(self) -> SimulationReport:
        for i, entry in enumerate(self.trace.entries):
            self.push(entry.arrival, "arrival", i)
        for i, bg in enumerate(self.config.congestion):
            self.push(bg.start, "bg_start", i)
            self.push(bg.end, "bg_end", i)
        for i, change in enumerate(self.config.traffic_changes):
            self.push(change.time, "traffic_change", i)
        while self.events:
            time, _, kind, data = heapq.heappop(self.events)
            self.now = max(self.now, time)
            getattr(self, f"_on_{kind}")(time, data)
        return self._build_report()

    # -- admission --

    def _on_arrival(self, time: float, entry_index: int) -> None:
        entry = self.trace.entries[entry_index]
        for job in entry.workload.jobs:
            self._try_admit(time, job.id, fresh=True)

    def _try_admit(self, time: float, job_id: str, fresh: bool) -> None:
        run = self.jobs[job_id]
        placed = self._place(run.job)
        if placed is None:
            if fresh and self.config.queue_rejected:
                self.queue.append(job_id)
                self.admissions.append({"time": time, "job": job_id, "event": "queued"})
            elif fresh:
                run.state = "rejected"
                self.admissions.append({"time": time, "job": job_id, "event": "rejected"})
            return
        run.nodes = placed
        run.state = "running"
        run.report.accepted = True
        run.report.admit_time = time
        self.admissions.append({"time": time, "job": job_id, "event": "admitted", "nodes": placed})
        if job_id in self.queue:
            self.queue.remove(job_id)
        if self.config.scheduler == "metronome":
            self._refresh_schemes(affected_nodes=set(placed.values()))
        if run.is_low_comm:
            self.push(time + (run.duration or 0.0), "lowcomm_done", job_id)
        else:
            if run.monitor is None:
                t_p, d, _ = run.traffic_params()
                run.monitor = MonitorState(
                    baseline=self._effective_period(run),
                    period=self._effective_period(run),
                    a_t=self.config.a_t,
                    o_t=self.config.o_t,
                    window=self.config.window,
                )
            self._start_iteration(time, run)

    def _place(self, job: JobSpec) -> Optional[Dict[str, str]]:
        name = self.config.scheduler
        try:
            if name == "metronome":
                outcomes = schedule_job(job, self.placement, self.cluster, self.params)
                return {o.task_id: o.node for o in outcomes}
            if name in ("agnostic", "latency-only", "exclusive", "ideal"):
                return self._place_baseline(job, name)
            raise ConfigError(f"unknown scheduler {name}")
        except (JobRejected, NoFeasibleNode):
            return None

    def _place_baseline(self, job: JobSpec, name: str) -> Optional[Dict[str, str]]:
        trial = self.placement.clone()
        chosen: Dict[str, str] = {}
        for task in sorted(job.tasks, key=lambda t: t.submit_order):
            candidates = []
            for node in self.cluster.nodes:
                if not trial.fits(task, node.id):
                    continue
                if name == "exclusive" and not task.low_comm:
                    reserved = sum(
                        t.bandwidth or 0.0 for t in trial.sharing_tasks(node.id)
                    )
                    if reserved + (task.bandwidth or 0.0) > node.link_bandwidth * (1 + 1e-12):
                        continue
                candidates.append(node)
            if not candidates:
                return None
            if name in ("agnostic", "ideal"):
                node = max(
                    candidates,
                    key=lambda n: (trial.residual(n.id, "gpu"), trial.residual(n.id, "cpu"), n.id),
                )
            elif name == "latency-only":
                from .scheduler import pre_filter

                cache = pre_filter(task, trial, self.cluster)
                node = min(candidates, key=lambda n: (cache.deltas[n.id], n.id))
            else:  # exclusive: first fit in node order
                node = candidates[0]
            trial.place(task, node.id)
            chosen[task.id] = node.id
        self.placement.assignments = trial.assignments
        self.placement.free = trial.free
        self.placement.node_tasks = trial.node_tasks
        self.placement.sharing = trial.sharing
        return chosen

    # -- TDM scheme and offset maintenance --

    def _refresh_schemes(self, affected_nodes: Set[str]) -> None:
        for node_id in sorted(affected_nodes):
            tasks = self.placement.sharing_tasks(node_id)
            jobs = {t.job_id for t in tasks}
            aggregate = sum(t.bandwidth or 0.0 for t in tasks)
            capacity = self.cluster.node(node_id).link_bandwidth
            if len(jobs) < 2 or aggregate <= capacity * (1 + 1e-12):
                self.schemes.pop(node_id, None)
                continue
            if self.config.rotation_mode == "compact":
                self.schemes[node_id] = compact_scheme(tasks, capacity, self.params, node_id)
            else:
                self.schemes[node_id] = offline_recalculate(tasks, capacity, self.params, node_id)
        self._recompose_offsets()

    def _recompose_offsets(self) -> None:
        job_of_task = {t: self.index.task_by_id[t].job_id for t in self.index.task_by_id}
        graph = build_affinity_graph(self.schemes, job_of_task, self.job_priority)
        old_targets = {j: self._target_tuple(j) for j in self.index.job_by_id}
        self.offsets = global_offset(graph)
        for job_id, run in self.jobs.items():
            if run.state != "running" or run.is_low_comm:
                continue
            if self._target_tuple(job_id) != old_targets[job_id]:
                run.first_comm_aligned = False

    def _target_tuple(self, job_id: str) -> Optional[Tuple[str, float]]:
        if job_id not in self.offsets.job_shifts:
            return None
        ref = self.offsets.component_reference[job_id]
        rel = self.offsets.job_shifts[job_id] - self.offsets.job_shifts[ref]
        return (ref, rel)

    def _declared_period(self, run: _JobRun) -> float:
        """Current declared period of the job (the CR analog, recalibratable)."""
        periods = [
            self.index.task_by_id[tid].period or 0.0
            for tid in self.index.tasks_of_job[run.job.id]
            if not self.index.task_by_id[tid].low_comm
        ]
        return max(periods)

    def _effective_period(self, run: _JobRun) -> float:
        eff = self._declared_period(run)
        for tid in self.index.tasks_of_job[run.job.id]:
            node = run.nodes.get(tid)
            if node and node in self.schemes:
                fit = self.schemes[node].fits.get(tid)
                if fit is not None:
                    eff = max(eff, fit.effective_period)
        return eff

    # -- iteration machinery --

    def _start_iteration(self, time: float, run: _JobRun) -> None:
        run.iter_start = time
        t_p, d, _ = run.traffic_params()
        comm = t_p * d
        physical_compute = (t_p - comm) * run.compute_factor
        run.idle_pad = max(0.0, self._effective_period(run) - self._declared_period(run))
        noise = 1.0
        if self.config.sigma > 0:
            assert run.rng is not None
            noise = float(np.exp(self.config.sigma * run.rng.standard_normal()))
        elif run.rng is not None:
            run.rng.standard_normal()  # keep streams aligned across sigma settings
        run.compute_version += 1
        duration = physical_compute * noise + run.idle_pad
        self.push(time + duration, "compute_done", (run.job.id, run.compute_version))

    def _on_compute_done(self, time: float, data: Tuple[str, int]) -> None:
        job_id, version = data
        run = self.jobs[job_id]
        if run.state != "running" or version != run.compute_version:
            return
        wait = 0.0
        target_time: Optional[float] = None
        if self.config.scheduler == "metronome":
            target = self._target_tuple(job_id)
            if target is not None:
                ref, rel = target
                needs = (not run.first_comm_aligned) or run.pending_realign
                epoch = self.epochs.get(ref)
                if needs and ref == job_id:
                    run.first_comm_aligned = True
                    run.pending_realign = False
                elif needs and epoch is not None:
                    eff = self._effective_period(run)
                    target_time = epoch + rel
                    wait = (target_time - time) % eff
                    target_time = time + wait
                    kind = "pause" if run.pending_realign else "rotate"
                    event = ReadjustmentEvent(
                        time=time, job=job_id, kind=kind, amount=wait, target_time=target_time
                    )
                    if kind == "pause":
                        run.report.pauses += 1
                    self.readjustments.append(event)
                    run.pending_pause_log = event
                    run.first_comm_aligned = True
                    run.pending_realign = False
        if wait > 0:
            self.push(time + wait, "comm_start", (job_id, run.compute_version))
        else:
            self._begin_comm(time, run)

    def _on_comm_start(self, time: float, data: Tuple[str, int]) -> None:
        job_id, version = data
        run = self.jobs[job_id]
        if run.state != "running" or version != run.compute_version:
            return
        self._begin_comm(time, run)

    def _begin_comm(self, time: float, run: _JobRun) -> None:
        run.last_comm_start = time
        run.comm_started_at = time
        if run.pending_pause_log is not None:
            run.pending_pause_log.actual_time = time
            run.pending_pause_log = None
        target = self._target_tuple(run.job.id)
        if target is not None and target[0] == run.job.id:
            self.epochs[run.job.id] = time
        t_p, d, r = run.traffic_params()
        bytes_budget = r * t_p * d
        run.active_flows = set()
        touched: Set[str] = set()
        for task in run.job.tasks:
            if task.low_comm:
                continue
            node = run.nodes[task.id]
            link = self.links[node]
            link.advance(time)
            link.flows[task.id] = _Flow(
                task_id=task.id,
                node=node,
                remaining=bytes_budget,
                cap=task.bandwidth or 0.0,
            )
            run.active_flows.add(task.id)
            touched.add(node)
        for node in sorted(touched):
            self._reallocate(time, node)

    def _reallocate(self, time: float, node: str) -> None:
        link = self.links[node]
        link.advance(time)
        link.reallocate()
        for flow in link.flows.values():
            if flow.background:
                continue
            flow.version += 1
            if flow.rate > 0:
                eta = time + max(flow.remaining, 0.0) / flow.rate
                self.push(eta, "flow_done", (node, flow.task_id, flow.version))

    def _on_flow_done(self, time: float, data: Tuple[str, str, int]) -> None:
        node, task_id, version = data
        link = self.links[node]
        flow = link.flows.get(task_id)
        if flow is None or flow.version != version:
            return
        link.advance(time)
        if flow.remaining > max(1.0, flow.cap * 1e-12):
            self._reallocate(time, node)
            return
        del link.flows[task_id]
        self._reallocate(time, node)
        job_id = self.index.task_by_id[task_id].job_id
        run = self.jobs[job_id]
        run.active_flows.discard(task_id)
        if not run.active_flows:
            self._end_iteration(time, run)

    def _end_iteration(self, time: float, run: _JobRun) -> None:
        duration = time - run.iter_start
        run.report.iterations.append(duration)
        run.iter_idx += 1
        if (
            self.config.scheduler == "metronome"
            and self.config.monitoring
            and run.monitor is not None
        ):
            self._monitor(time, run, duration)
        if run.iterations_total is not None and run.iter_idx >= run.iterations_total:
            self._complete(time, run)
        else:
            self._start_iteration(time, run)

    def _monitor(self, time: float, run: _JobRun, duration: float) -> None:
        state = run.monitor
        assert state is not None
        eff = self._effective_period(run)
        state.baseline = eff
        state.period = eff
        target = self._target_tuple(run.job.id)
        if target is not None:
            ref, rel = target
            epoch = self.epochs.get(ref)
            if epoch is not None and run.last_comm_start is not None:
                state.assigned_phase = rel % eff
                state.observed_phase = (run.last_comm_start - epoch) % eff
        action = monitor_tick(state, duration, run.job.priority)
        if isinstance(action, PauseLowPriority):
            run.pending_realign = True
        self._check_pattern(time, run, state)

    def _check_pattern(self, time: float, run: _JobRun, state: MonitorState) -> None:
        if not self.config.recalibration:
            return
        window = state.window
        if len(run.report.iterations) < window:
            return
        t_p, d, _ = run.traffic_params()
        comm = t_p * d
        # contention and pauses only ever lengthen iterations, so the window
        # minimum is a robust estimate of the job's own nominal duration
        observed_period = min(run.report.iterations[-window:])
        nominal_observed = max(observed_period - run.idle_pad, comm * (1.0 + 1e-9))
        t_decl = self._declared_period(run)
        change = detect_pattern_change(
            t_decl, comm / t_decl, nominal_observed, comm / nominal_observed, self.config.e_t, state
        )
        if change.action != "recalibrate":
            return
        new_period = nominal_observed
        material = abs(new_period - t_decl) > 0.25 * self.config.e_t * t_decl
        if material:
            from dataclasses import replace as _replace

            for tid in self.index.tasks_of_job[run.job.id]:
                spec = self.index.task_by_id[tid]
                if not spec.low_comm:
                    self.index.task_by_id[tid] = _replace(
                        spec, period=new_period, duty_cycle=comm / new_period
                    )
        self.readjustments.append(
            ReadjustmentEvent(
                time=time,
                job=run.job.id,
                kind="recalibrate",
                amount=new_period - t_decl if material else 0.0,
            )
        )
        state.durations.clear()
        state.pause_iterations.clear()
        self._refresh_schemes(affected_nodes=set(run.nodes.values()))

    def _complete(self, time: float, run: _JobRun) -> None:
        run.state = "finished"
        run.report.completion = time
        self.placement.remove_job(run.job.id)
        affected = set(run.nodes.values())
        run.nodes = {}
        if self.config.scheduler == "metronome":
            self._refresh_schemes(affected_nodes=affected)
        self._retry_queue(time)

    def _on_lowcomm_done(self, time: float, job_id: str) -> None:
        run = self.jobs[job_id]
        if run.state != "running":
            return
        self._complete(time, run)

    def _retry_queue(self, time: float) -> None:
        for job_id in list(self.queue):
            self._try_admit(time, job_id, fresh=False)

    # -- background congestion --

    def _on_traffic_change(self, time: float, idx: int) -> None:
        change = self.config.traffic_changes[idx]
        run = self.jobs.get(change.job)
        if run is not None:
            run.compute_factor = change.factor

    def _on_bg_start(self, time: float, idx: int) -> None:
        bg = self.config.congestion[idx]
        link = self.links[bg.node]
        link.advance(time)
        link.flows[f"__bg{idx}"] = _Flow(
            task_id=f"__bg{idx}", node=bg.node, remaining=math.inf, cap=bg.rate, background=True
        )
        self._reallocate(time, bg.node)

    def _on_bg_end(self, time: float, idx: int) -> None:
        bg = self.config.congestion[idx]
        link = self.links[bg.node]
        link.advance(time)
        link.flows.pop(f"__bg{idx}", None)
        self._reallocate(time, bg.node)

    # -- reporting --

    def _build_report(self) -> SimulationReport:
        for job_id in self.queue:
            run = self.jobs[job_id]
            if run.state == "queued":
                run.state = "rejected"
                self.admissions.append({"time": self.now, "job": job_id, "event": "rejected"})
        end = self.now
        links: List[LinkReport] = []
        per_link: List[Tuple[float, float]] = []
        for node in self.cluster.nodes:
            link = self.links[node.id]
            total_bits = sum((t1 - t0) * rate for t0, t1, rate in link.segments)
            util = total_bits / (node.link_bandwidth * end) if end > 0 else 0.0
            series = self._bucketize(link, end)
            links.append(LinkReport(node=node.id, capacity=node.link_bandwidth, utilization=util, series=series))
            per_link.append((util, node.link_bandwidth))
        b_max = self.cluster.b_max
        gamma = sum(b * u / b_max for u, b in per_link) / len(per_link) if per_link else 0.0
        completions = [r.report.completion for r in self.jobs.values() if r.report.completion is not None]
        reports = [self.jobs[j].report for j in sorted(self.jobs, key=lambda j: self.jobs[j].uid)]
        return SimulationReport(
            scheduler=self.config.scheduler,
            seed=self.trace.seed,
            duration=end,
            jobs=reports,
            links=links,
            gamma=gamma,
            tct=max(completions) if completions else None,
            readjustments=self.readjustments,
            admissions=self.admissions,
        )

    def _bucketize(self, link: _Link, end: float) -> List[Tuple[float, float]]:
        if end <= 0:
            return []
        width = self.config.util_bucket
        count = int(math.ceil(end / width))
        bits = np.zeros(count)
        for t0, t1, rate in link.segments:
            b0 = int(t0 // width)
            b1 = min(count - 1, int((t1 - 1e-15) // width)) if t1 > t0 else b0
            for b in range(b0, b1 + 1):
                lo = max(t0, b * width)
                hi = min(t1, (b + 1) * width)
                if hi > lo:
                    bits[b] += rate * (hi - lo)
        return [(i * width, float(bits[i] / (link.capacity * width))) for i in range(count)]


def run(trace: Trace, cluster: ClusterSpec, config: SimulationConfig) -> SimulationReport:
    """Simulate one trace under one scheduler; deterministic given the seed."""
    if config.scheduler == "ideal":
        return _run_ideal(trace, cluster, config)
    return _Engine(trace, cluster, config).run()


def _run_ideal(trace: Trace, cluster: ClusterSpec, config: SimulationConfig) -> SimulationReport:
    """Each job runs alone on a dedicated cluster clone; reports are merged."""
    merged_jobs: List[JobReport] = []
    link_bits: Dict[str, float] = {n.id: 0.0 for n in cluster.nodes}
    duration = 0.0
    admissions: List[Dict[str, Any]] = []
    uid = 0
    for i, entry in enumerate(trace.entries):
        for job in entry.workload.jobs:
            sub_workload = WorkloadSpec(id=job.workload_id, jobs=(job,), dependencies=())
            sub_entry = TraceEntry(
                arrival=entry.arrival,
                workload=sub_workload,
                iterations={job.id: entry.iterations[job.id]} if job.id in entry.iterations else {},
                durations={job.id: entry.durations[job.id]} if job.id in entry.durations else {},
            )
            sub_trace = Trace(seed=trace.seed, horizon=trace.horizon, entries=(sub_entry,))
            sub_config = replace(config, scheduler="agnostic", congestion=())
            engine = _Engine(sub_trace, cluster, sub_config)
            engine.jobs[job.id].uid = uid
            engine.jobs[job.id].rng = np.random.default_rng([trace.seed, uid])
            report = engine.run()
            merged_jobs.extend(report.jobs)
            admissions.extend(report.admissions)
            for link in report.links:
                link_bits[link.node] += link.utilization * link.capacity * report.duration
            duration = max(duration, report.duration)
            uid += 1
    links = []
    per_link = []
    for n in cluster.nodes:
        util = link_bits[n.id] / (n.link_bandwidth * duration) if duration > 0 else 0.0
        links.append(LinkReport(node=n.id, capacity=n.link_bandwidth, utilization=util, series=[]))
        per_link.append((util, n.link_bandwidth))
    b_max = cluster.b_max
    gamma = sum(b * u / b_max for u, b in per_link) / len(per_link) if per_link else 0.0
    completions = [j.completion for j in merged_jobs if j.completion is not None]
    return SimulationReport(
        scheduler="ideal",
        seed=trace.seed,
        duration=duration,
        jobs=merged_jobs,
        links=links,
        gamma=gamma,
        tct=max(completions) if completions else None,
        readjustments=[],
        admissions=admissions,
    )


def compare_schedulers(
    trace: Trace,
    cluster: ClusterSpec,
    config: SimulationConfig,
    schedulers: Sequence[str],
) -> Dict[str, SimulationReport]:
    """Run the identical trace and seed once per scheduler."""
    out: Dict[str, SimulationReport] = {}
    for name in schedulers:
        out[name] = run(trace, cluster, replace(config, scheduler=name))
    return out
