"""Core domain types: cluster, workload hierarchy, and placement bookkeeping.

The workload hierarchy is workload -> job -> task.  A task is the unit of
scheduling; a job is admitted all-or-nothing; a workload is deployed once
every one of its jobs is deployed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .errors import ConfigError, EmptySet, InsufficientResources

RESOURCES = ("cpu", "mem", "gpu")


class Priority(enum.Enum):
    HIGH = "high"
    LOW = "low"

    @classmethod
    def parse(cls, value: object) -> "Priority":
        if isinstance(value, Priority):
            return value
        text = str(value).strip().lower()
        if text in ("high", "h"):
            return cls.HIGH
        if text in ("low", "l"):
            return cls.LOW
        raise ConfigError(f"unknown priority {value!r}")


@dataclass(frozen=True)
class NodeSpec:
    """A worker node; its host link is the only capacity-constrained link."""

    id: str
    cpu: float
    mem: float
    gpu: float
    link_bandwidth: float  # bits/second

    def __post_init__(self) -> None:
        for name in ("cpu", "mem", "gpu", "link_bandwidth"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"node {self.id}: {name} must be > 0")

    def capacity(self, resource: str) -> float:
        return getattr(self, resource)


@dataclass(frozen=True)
class ClusterSpec:
    """Nodes plus the pairwise latency weight matrix (diagonal fixed at 1)."""

    nodes: Tuple[NodeSpec, ...]
    latency: Tuple[Tuple[float, ...], ...]

    def __post_init__(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError("node ids must be unique")
        n = len(self.nodes)
        if len(self.latency) != n or any(len(row) != n for row in self.latency):
            raise ConfigError("latency matrix shape must match node count")
        for i in range(n):
            if abs(self.latency[i][i] - 1.0) > 1e-12:
                raise ConfigError("latency diagonal entries must equal 1")
            for j in range(n):
                if self.latency[i][j] <= 0:
                    raise ConfigError("latency entries must be positive")
                if abs(self.latency[i][j] - self.latency[j][i]) > 1e-9:
                    raise ConfigError("latency matrix must be symmetric")

    @property
    def b_max(self) -> float:
        return max(n.link_bandwidth for n in self.nodes)

    @property
    def node_ids(self) -> Tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def node_index(self, node_id: str) -> int:
        for i, n in enumerate(self.nodes):
            if n.id == node_id:
                return i
        raise KeyError(node_id)

    def tau(self, a: str, b: str) -> float:
        return self.latency[self.node_index(a)][self.node_index(b)]

    def tau_row_average(self, a: str) -> float:
        row = self.latency[self.node_index(a)]
        return sum(row) / len(row)


@dataclass(frozen=True)
class TaskSpec:
    """One schedulable unit (a pod in cluster terms).

    A low_comm task declares no traffic pattern: bandwidth, period and
    duty_cycle are ignored and its communication is not guaranteed.
    """

    id: str
    job_id: str
    workload_id: str
    cpu: float
    mem: float
    gpu: float
    priority: Priority
    submit_order: int
    low_comm: bool = False
    period: Optional[float] = None
    duty_cycle: Optional[float] = None
    bandwidth: Optional[float] = None

    def __post_init__(self) -> None:
        if self.cpu < 0 or self.mem < 0 or self.gpu < 0:
            raise ConfigError(f"task {self.id}: resource requests must be >= 0")
        if self.low_comm:
            return
        if self.period is None or self.period <= 0:
            raise ConfigError(f"task {self.id}: period must be > 0")
        if self.duty_cycle is None or not (0.0 <= self.duty_cycle <= 1.0):
            raise ConfigError(f"task {self.id}: duty_cycle must be in [0, 1]")
        if self.bandwidth is None or self.bandwidth <= 0:
            raise ConfigError(f"task {self.id}: bandwidth must be > 0")

    def request(self, resource: str) -> float:
        return getattr(self, resource)

    @property
    def comm_duration(self) -> float:
        """Communication time per iteration at the declared rate."""
        if self.low_comm:
            return 0.0
        return self.period * self.duty_cycle


def priority_key(task: TaskSpec) -> Tuple[int, int]:
    """Total order over tasks: High beats Low, earlier submit order wins."""
    return (0 if task.priority is Priority.HIGH else 1, task.submit_order)


def highest_priority_task(link_tasks: Iterable[TaskSpec]) -> TaskSpec:
    """Maximum element of the priority ordering; permutation invariant."""
    tasks = list(link_tasks)
    if not tasks:
        raise EmptySet("highest_priority_task needs a nonempty set")
    return min(tasks, key=priority_key)


@dataclass(frozen=True)
class JobSpec:
    id: str
    workload_id: str
    priority: Priority
    tasks: Tuple[TaskSpec, ...]

    def __post_init__(self) -> None:
        if not self.tasks:
            raise ConfigError(f"job {self.id}: needs at least one task")
        for t in self.tasks:
            if t.priority is not self.priority:
                raise ConfigError(f"job {self.id}: task {t.id} priority differs from job")
            if t.job_id != self.id:
                raise ConfigError(f"job {self.id}: task {t.id} carries wrong job_id")


@dataclass(frozen=True)
class WorkloadSpec:
    id: str
    jobs: Tuple[JobSpec, ...]
    dependencies: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        job_ids = {j.id for j in self.jobs}
        for a, b in self.dependencies:
            if a not in job_ids or b not in job_ids:
                raise ConfigError(f"workload {self.id}: dependency ({a}, {b}) references unknown job")


class WorkloadIndex:
    """Lookup tables over a set of workloads.

    Intra-job task pairs are materialized as dependencies here, once, at
    build time: tasks of one job synchronize with each other, so they are
    always treated as mutually dependent by the latency logic.
    """

    def __init__(self, workloads: Sequence[WorkloadSpec]):
        self.workloads: Tuple[WorkloadSpec, ...] = tuple(workloads)
        self.workload_by_id: Dict[str, WorkloadSpec] = {}
        self.job_by_id: Dict[str, JobSpec] = {}
        self.task_by_id: Dict[str, TaskSpec] = {}
        self.tasks_of_job: Dict[str, Tuple[str, ...]] = {}
        self.jobs_of_workload: Dict[str, Tuple[str, ...]] = {}
        for w in self.workloads:
            if w.id in self.workload_by_id:
                raise ConfigError(f"duplicate workload id {w.id}")
            self.workload_by_id[w.id] = w
            self.jobs_of_workload[w.id] = tuple(j.id for j in w.jobs)
            for j in w.jobs:
                if j.id in self.job_by_id:
                    raise ConfigError(f"duplicate job id {j.id}")
                self.job_by_id[j.id] = j
                self.tasks_of_job[j.id] = tuple(t.id for t in j.tasks)
                for t in j.tasks:
                    if t.id in self.task_by_id:
                        raise ConfigError(f"duplicate task id {t.id}")
                    self.task_by_id[t.id] = t
        orders = [t.submit_order for t in self.task_by_id.values()]
        if len(set(orders)) != len(orders):
            raise ConfigError("submit_order values must be unique across all tasks")
        self.dependent_tasks: Dict[str, Tuple[str, ...]] = self._build_dependents()

    def _build_dependents(self) -> Dict[str, Tuple[str, ...]]:
        related_jobs: Dict[str, Set[str]] = {j: set() for j in self.job_by_id}
        for w in self.workloads:
            for a, b in w.dependencies:
                related_jobs[a].add(b)
                related_jobs[b].add(a)
        out: Dict[str, Tuple[str, ...]] = {}
        for tid, task in self.task_by_id.items():
            deps: List[str] = [t for t in self.tasks_of_job[task.job_id] if t != tid]
            for other_job in sorted(related_jobs[task.job_id]):
                deps.extend(self.tasks_of_job[other_job])
            out[tid] = tuple(deps)
        return out

    def all_tasks(self) -> List[TaskSpec]:
        return [self.task_by_id[t] for w in self.workloads for j in w.jobs for t in self.tasks_of_job[j.id]]

    def job_of_task(self, task_id: str) -> JobSpec:
        return self.job_by_id[self.task_by_id[task_id].job_id]


@dataclass
class Placement:
    """Mutable placement state: assignments, residuals, link sharing sets.

    `sharing[node]` is the set of bandwidth-declaring tasks on the node's
    host link; low_comm tasks occupy CPU/MEM/GPU but never join it.
    """

    cluster: ClusterSpec
    index: WorkloadIndex
    assignments: Dict[str, str] = field(default_factory=dict)
    free: Dict[str, Dict[str, float]] = field(default_factory=dict)
    node_tasks: Dict[str, List[str]] = field(default_factory=dict)
    sharing: Dict[str, List[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.free:
            self.free = {n.id: {r: n.capacity(r) for r in RESOURCES} for n in self.cluster.nodes}
            self.node_tasks = {n.id: [] for n in self.cluster.nodes}
            self.sharing = {n.id: [] for n in self.cluster.nodes}

    def clone(self) -> "Placement":
        return Placement(
            cluster=self.cluster,
            index=self.index,
            assignments=dict(self.assignments),
            free={n: dict(r) for n, r in self.free.items()},
            node_tasks={n: list(ts) for n, ts in self.node_tasks.items()},
            sharing={n: list(ts) for n, ts in self.sharing.items()},
        )

    def residual(self, node_id: str, resource: str) -> float:
        return self.free[node_id][resource]

    def fits(self, task: TaskSpec, node_id: str) -> bool:
        return all(self.free[node_id][r] >= task.request(r) - 1e-12 for r in RESOURCES)

    def place(self, task: TaskSpec, node_id: str) -> None:
        if node_id not in self.free:
            raise KeyError(node_id)
        if task.id in self.assignments:
            raise InsufficientResources(f"task {task.id} already placed")
        if not self.fits(task, node_id):
            raise InsufficientResources(f"task {task.id} does not fit on node {node_id}")
        for r in RESOURCES:
            self.free[node_id][r] -= task.request(r)
        self.assignments[task.id] = node_id
        self.node_tasks[node_id].append(task.id)
        if not task.low_comm:
            self.sharing[node_id].append(task.id)

    def remove_task(self, task_id: str) -> None:
        node_id = self.assignments.pop(task_id)
        task = self.index.task_by_id[task_id]
        for r in RESOURCES:
            self.free[node_id][r] += task.request(r)
        self.node_tasks[node_id].remove(task_id)
        if not task.low_comm:
            self.sharing[node_id].remove(task_id)

    def remove_job(self, job_id: str) -> None:
        for tid in self.index.tasks_of_job[job_id]:
            if tid in self.assignments:
                self.remove_task(tid)

    def task_count(self, workload_id: str, job_id: str, node_id: str) -> int:
        """P_{w,j}(n): number of tasks of the job placed on the node."""
        return sum(
            1
            for tid in self.index.tasks_of_job[job_id]
            if self.assignments.get(tid) == node_id
        )

    def job_deployed(self, job_id: str) -> bool:
        return all(t in self.assignments for t in self.index.tasks_of_job[job_id])

    def workload_deployed(self, workload_id: str) -> bool:
        return all(self.job_deployed(j) for j in self.index.jobs_of_workload[workload_id])

    def deployment_flags(self) -> Tuple[Dict[str, int], Dict[str, int]]:
        """(D_w per workload, D_{w,j} per job)."""
        d_job = {j: int(self.job_deployed(j)) for j in self.index.job_by_id}
        d_workload = {
            w: int(all(d_job[j] for j in self.index.jobs_of_workload[w]))
            for w in self.index.workload_by_id
        }
        return d_workload, d_job

    def sharing_tasks(self, node_id: str) -> List[TaskSpec]:
        return [self.index.task_by_id[t] for t in self.sharing[node_id]]

    def jobs_on_link(self, node_id: str) -> List[str]:
        seen: List[str] = []
        for tid in self.sharing[node_id]:
            jid = self.index.task_by_id[tid].job_id
            if jid not in seen:
                seen.append(jid)
        return seen


def apply_placement(placement: Placement, task: TaskSpec, node_id: str) -> Placement:
    """Place `task` on `node_id`, updating residuals and the sharing set."""
    placement.place(task, node_id)
    return placement
