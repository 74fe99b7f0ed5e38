"""Synthetic trace generation: Poisson arrivals thinned to a GPU-load band.

Job templates model common distributed-training workloads (vision models
under data parallelism, language models under model parallelism) with
periods of tens to hundreds of milliseconds and duty cycles well inside
(0, 1).  Defaults are scaled down 48x from a four-hour horizon: five
minutes of trace with job durations between 37.5 and 112.5 seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .errors import InfeasibleLoad
from .model import ClusterSpec, JobSpec, Priority, TaskSpec, WorkloadSpec
from .simulator import Trace, TraceEntry


@dataclass(frozen=True)
class JobTemplate:
    name: str
    period: float          # seconds
    duty_cycle: float
    bandwidth: float       # bits/second
    tasks: int
    gpu_per_task: float = 1.0
    cpu_per_task: float = 5.0
    mem_per_task: float = 5e9
    priority: Priority = Priority.LOW
    low_comm: bool = False
    weight: float = 1.0


DEFAULT_CATALOG: Tuple[JobTemplate, ...] = (
    JobTemplate("vgg11", 0.140, 0.40, 18e9, 2),
    JobTemplate("vgg16", 0.180, 0.45, 20e9, 2, priority=Priority.HIGH),
    JobTemplate("vgg19", 0.200, 0.45, 20e9, 2, priority=Priority.HIGH),
    JobTemplate("resnet18", 0.080, 0.20, 12e9, 2),
    JobTemplate("resnet50", 0.120, 0.25, 15e9, 2),
    JobTemplate("resnet152", 0.250, 0.30, 18e9, 2),
    JobTemplate("wideresnet101", 0.220, 0.35, 18e9, 2, priority=Priority.HIGH),
    JobTemplate("googlenet", 0.100, 0.45, 22e9, 2),
    JobTemplate("densenet201", 0.200, 0.28, 16e9, 2),
    JobTemplate("alexnet", 0.060, 0.30, 10e9, 2),
    JobTemplate("gpt1", 0.300, 0.40, 22e9, 2, priority=Priority.HIGH),
    JobTemplate("gpt2", 0.400, 0.55, 24e9, 2),
    JobTemplate("bert", 0.350, 0.45, 22e9, 2),
    JobTemplate("etl-sidecar", 0.0, 0.0, 0.0, 1, low_comm=True, weight=0.5),
)


@dataclass(frozen=True)
class TraceParams:
    horizon: float = 300.0
    duration_range: Tuple[float, float] = (37.5, 112.5)
    load_target: float = 0.75
    load_max: float = 0.85
    catalog: Tuple[JobTemplate, ...] = DEFAULT_CATALOG

    def __post_init__(self) -> None:
        if self.horizon < 0 or self.duration_range[0] <= 0:
            raise InfeasibleLoad("horizon and durations must be positive")
        if not (0.0 <= self.load_target <= self.load_max <= 1.0):
            raise InfeasibleLoad("need 0 <= load_target <= load_max <= 1")


@dataclass(frozen=True)
class TraceSummary:
    jobs: int
    average_load: float
    max_load: float


def generate_trace(seed: int, cluster: ClusterSpec, params: TraceParams) -> Tuple[Trace, TraceSummary]:
    """Poisson arrivals thinned so GPU load stays inside the target band.

    Load is the fraction of cluster GPUs serving jobs active per the trace
    schedule (arrival to arrival+duration).  Raises InfeasibleLoad when a
    single smallest job already exceeds the load cap.
    """
    rng = np.random.default_rng(seed)
    total_gpu = sum(n.gpu for n in cluster.nodes)
    catalog = params.catalog
    weights = np.array([t.weight for t in catalog], dtype=float)
    weights = weights / weights.sum()
    min_job_gpu = min(t.tasks * t.gpu_per_task for t in catalog)
    if params.load_target > 0 and min_job_gpu / total_gpu > params.load_max:
        raise InfeasibleLoad("smallest catalog job exceeds the load cap on this cluster")

    if params.load_target <= 0 or params.horizon <= 0:
        return Trace(seed=seed, horizon=params.horizon, entries=()), TraceSummary(0, 0.0, 0.0)

    mean_duration = sum(params.duration_range) / 2.0
    mean_gpu = sum(t.tasks * t.gpu_per_task * w for t, w in zip(catalog, weights))
    # offered rate deliberately above the target; the cap does the shaping
    rate = 3.0 * params.load_target * total_gpu / (mean_gpu * mean_duration)

    active: List[Tuple[float, float]] = []  # (end time, gpus)
    entries: List[TraceEntry] = []
    t = 0.0
    job_seq = 0
    while True:
        t += float(rng.exponential(1.0 / rate))
        if t >= params.horizon:
            break
        template = catalog[int(rng.choice(len(catalog), p=weights))]
        duration = float(rng.uniform(*params.duration_range))
        if not template.low_comm:
            # the trace's effective duration is a whole number of iterations
            duration = max(1, int(round(duration / template.period))) * template.period
        gpus = template.tasks * template.gpu_per_task
        current = sum(g for end, g in active if end > t)
        if (current + gpus) / total_gpu > params.load_max:
            continue
        job_seq += 1
        wid = f"w{job_seq:03d}"
        jid = f"{wid}-{template.name}"
        tasks = []
        for k in range(template.tasks):
            tasks.append(
                TaskSpec(
                    id=f"{jid}-t{k}",
                    job_id=jid,
                    workload_id=wid,
                    cpu=template.cpu_per_task,
                    mem=template.mem_per_task,
                    gpu=template.gpu_per_task,
                    priority=template.priority,
                    submit_order=job_seq * 100 + k,
                    low_comm=template.low_comm,
                    period=None if template.low_comm else template.period,
                    duty_cycle=None if template.low_comm else template.duty_cycle,
                    bandwidth=None if template.low_comm else template.bandwidth,
                )
            )
        job = JobSpec(id=jid, workload_id=wid, priority=template.priority, tasks=tuple(tasks))
        workload = WorkloadSpec(id=wid, jobs=(job,))
        iterations: Dict[str, int] = {}
        durations: Dict[str, float] = {}
        if template.low_comm:
            durations[jid] = duration
        else:
            iterations[jid] = max(1, int(round(duration / template.period)))
        entries.append(TraceEntry(arrival=t, workload=workload, iterations=iterations, durations=durations))
        active.append((t + duration, gpus))

    trace = Trace(seed=seed, horizon=params.horizon, entries=tuple(entries))
    summary = _summarize_load(trace, total_gpu, params)
    return trace, summary


def _summarize_load(trace: Trace, total_gpu: float, params: TraceParams) -> TraceSummary:
    points: List[Tuple[float, float]] = []
    for entry in trace.entries:
        gpus = sum(t.gpu for j in entry.workload.jobs for t in j.tasks)
        duration = max(
            list(entry.durations.values())
            + [
                n * (j.tasks[0].period or 0.0)
                for j in entry.workload.jobs
                for jid, n in entry.iterations.items()
                if jid == j.id
            ]
        )
        points.append((entry.arrival, gpus))
        points.append((entry.arrival + duration, -gpus))
    if not points:
        return TraceSummary(0, 0.0, 0.0)
    points.sort()
    # average load excluding the ramp-up before the first completion-scale window
    startup = min(sum(params.duration_range) / 2.0, params.horizon / 4.0)
    horizon = params.horizon
    level = 0.0
    prev = 0.0
    weighted = 0.0
    span = 0.0
    max_load = 0.0
    for time, delta in points:
        time = min(time, horizon)
        if time > prev:
            if prev >= startup:
                weighted += level / total_gpu * (time - prev)
                span += time - prev
            max_load = max(max_load, level / total_gpu)
        level += delta
        prev = time
        if prev >= horizon:
            break
    avg = weighted / span if span > 0 else 0.0
    return TraceSummary(jobs=len(trace.entries), average_load=avg, max_load=max_load)
