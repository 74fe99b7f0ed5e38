"""Stop-and-wait controller: global offsets, offline recalculation, regulation.

The scheduler hands over per-link relative rotation schemes.  This module
composes them into consistent global time-shifts, recomputes optimal
rotations offline (the cushion-maximizing third stage), and watches
iteration times so drifting low-priority jobs can be paused back into
their slots.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import CycleDetected, NoContendingPairs
from .geometry import TWO_PI
from .metrics import min_comm_interval
from .model import Priority, TaskSpec
from .scheduler import LinkProblem, RotationScheme, SchedulerParams


@dataclass(frozen=True)
class AffinityGraph:
    """Bipartite graph of jobs and links carrying each link's scheme."""

    schemes: Mapping[str, RotationScheme]      # link (node id) -> scheme
    job_of_task: Mapping[str, str]
    job_priority: Mapping[str, Tuple[int, int]]  # job -> priority sort key

    def jobs_of_link(self, link: str) -> List[str]:
        seen: List[str] = []
        for tid in self.schemes[link].task_ids:
            j = self.job_of_task[tid]
            if j not in seen:
                seen.append(j)
        return seen

    def links_of_job(self) -> Dict[str, List[str]]:
        out: Dict[str, List[str]] = {}
        for link in self.schemes:
            for j in self.jobs_of_link(link):
                out.setdefault(j, []).append(link)
        return out


@dataclass(frozen=True)
class GlobalOffsets:
    """Composed time shifts; the reference job of each component sits at 0."""

    job_shifts: Mapping[str, float]
    task_shifts: Mapping[str, float]
    component_reference: Mapping[str, str]  # job -> reference job of its component

    def shift_of_task(self, task_id: str) -> float:
        return self.task_shifts.get(task_id, 0.0)


def build_affinity_graph(
    schemes: Mapping[str, RotationScheme],
    job_of_task: Mapping[str, str],
    job_priority: Mapping[str, Tuple[int, int]],
) -> AffinityGraph:
    return AffinityGraph(schemes=dict(schemes), job_of_task=dict(job_of_task), job_priority=dict(job_priority))


def global_offset(graph: AffinityGraph) -> GlobalOffsets:
    """Compose per-link relative shifts into global ones by graph traversal.

    Each connected component is rebased so its highest-priority job gets
    shift 0; every link's relative differences are preserved modulo that
    link's circle period.
    """
    link_jobs = {link: graph.jobs_of_link(link) for link in graph.schemes}
    adjacency: Dict[str, List[str]] = {}
    for link, jobs in link_jobs.items():
        adjacency[f"link::{link}"] = [f"job::{j}" for j in jobs]
        for j in jobs:
            adjacency.setdefault(f"job::{j}", []).append(f"link::{link}")

    job_shift_of_link: Dict[str, Dict[str, float]] = {}
    for link, scheme in graph.schemes.items():
        shifts: Dict[str, float] = {}
        for tid in scheme.task_ids:
            shifts[graph.job_of_task[tid]] = scheme.time_shifts[tid]
        job_shift_of_link[link] = shifts

    visited: Set[str] = set()
    job_shifts: Dict[str, float] = {}
    component_reference: Dict[str, str] = {}
    all_jobs = sorted(
        {j for jobs in link_jobs.values() for j in jobs},
        key=lambda j: (graph.job_priority[j], j),
    )
    for root in all_jobs:
        root_vertex = f"job::{root}"
        if root_vertex in visited:
            continue
        component_jobs = [root]
        job_shifts[root] = 0.0
        visited.add(root_vertex)
        queue: Deque[str] = deque([root_vertex])
        edges_seen = 0
        vertices = 1
        while queue:
            vertex = queue.popleft()
            for nxt in sorted(adjacency.get(vertex, ())):
                edges_seen += 1
                if nxt in visited:
                    continue
                visited.add(nxt)
                vertices += 1
                queue.append(nxt)
                if nxt.startswith("job::"):
                    job = nxt[5:]
                    link = vertex[6:]
                    scheme = graph.schemes[link]
                    parent_job = _parent_job_on_link(graph, link, job_shifts)
                    rel = job_shift_of_link[link][job] - job_shift_of_link[link][parent_job]
                    job_shifts[job] = (job_shifts[parent_job] + rel) % scheme.t_l
                    component_jobs.append(job)
        if edges_seen // 2 > vertices - 1:
            raise CycleDetected("affinity graph contains a cycle")
        for j in component_jobs:
            component_reference[j] = root

    task_shifts: Dict[str, float] = {}
    for link, scheme in graph.schemes.items():
        for tid in scheme.task_ids:
            task_shifts[tid] = job_shifts[graph.job_of_task[tid]]
    return GlobalOffsets(
        job_shifts=job_shifts,
        task_shifts=task_shifts,
        component_reference=component_reference,
    )


def _parent_job_on_link(graph: AffinityGraph, link: str, job_shifts: Dict[str, float]) -> str:
    for j in graph.jobs_of_link(link):
        if j in job_shifts:
            return j
    raise CycleDetected(f"link {link} reached before any of its jobs")


def offline_recalculate(
    tasks: Sequence[TaskSpec],
    capacity: float,
    params: SchedulerParams,
    node: str,
) -> RotationScheme:
    """Exhaustive third-stage search over run-middle candidates.

    All rotation combinations are enumerated; candidates are the middle
    indices of every maximal best-score run (perfect runs when a perfect
    combination exists).  Among candidates the scheme maximizing the
    minimum communication interval wins; ties break lexicographically on
    the index vector.
    """
    problem = LinkProblem(node, capacity, list(tasks), params)
    best_score, middles, _ = problem.run_middles()
    best_combo: Optional[Tuple[int, ...]] = None
    best_psi = -math.inf
    for combo in middles:
        indices = problem._combo_to_indices(combo)
        rotated = problem.rotated_abstractions(indices)
        try:
            psi = min_comm_interval(rotated, problem.tasks, capacity)
        except NoContendingPairs:
            psi = math.inf
        if psi > best_psi + 1e-12:
            best_psi = psi
            best_combo = combo
    assert best_combo is not None
    return problem.build_scheme(problem._combo_to_indices(best_combo), best_score)


def compact_scheme(
    tasks: Sequence[TaskSpec],
    capacity: float,
    params: SchedulerParams,
    node: str,
) -> RotationScheme:
    """Stage-three ablation: pack each job's phase right after the previous one.

    The start of each lower-priority job's communication is aligned with
    the end of the previous job's communication, leaving no cushion.
    """
    problem = LinkProblem(node, capacity, list(tasks), params)
    order: List[str] = [problem.reference_job] + list(problem.free_jobs)
    shifts_angle: Dict[str, float] = {problem.reference_job: 0.0}
    cursor = max(
        (problem.abstractions[t.id].alpha for t in problem.job_tasks[problem.reference_job]),
        default=0.0,
    )
    for job in order[1:]:
        mul = max(problem.unified.fit(t.id).mul for t in problem.job_tasks[job])
        span = TWO_PI / mul
        shifts_angle[job] = cursor % span
        widest = max(problem.abstractions[t.id].alpha for t in problem.job_tasks[job])
        cursor = shifts_angle[job] + widest
    task_indices: Dict[str, int] = {}
    time_shifts: Dict[str, float] = {}
    for t in problem.tasks:
        angle = shifts_angle[t.job_id]
        task_indices[t.id] = int(round(angle / (TWO_PI / problem.di_pre)))
        time_shifts[t.id] = angle / TWO_PI * problem.t_l
    return RotationScheme(
        node=node,
        di_pre=problem.di_pre,
        t_l=problem.t_l,
        reference_task=problem.reference_task,
        task_ids=tuple(t.id for t in problem.tasks),
        indices=task_indices,
        time_shifts=time_shifts,
        fits={t.id: problem.unified.fit(t.id) for t in problem.tasks},
        score=_compact_score(problem, shifts_angle),
    )


def _compact_score(problem: LinkProblem, shifts_angle: Mapping[str, float]) -> float:
    import numpy as np

    delta = TWO_PI / problem.di_pre
    total = problem.base.copy()
    for job in problem.free_jobs:
        idx = int(round((shifts_angle[job] % TWO_PI) / delta))
        total = total + np.roll(problem._coverage[job], idx)
    excess = float(np.maximum(total - problem.capacity, 0.0).sum())
    return float(problem.score_of_excess(np.array([excess]))[0])


# -- continuous regulation ----------------------------------------------------


@dataclass(frozen=True)
class PauseLowPriority:
    """Pause the task until its phase realigns with the assigned shift."""

    realign: float


@dataclass
class MonitorState:
    """Sliding window of recent iteration durations for one task.

    `assigned_phase` and `observed_phase` are phases modulo the task's
    effective period, both measured against the same epoch; the simulator
    anchors the epoch to the reference job's observed communication start.
    """

    baseline: float
    period: float
    a_t: float = 1.10
    o_t: int = 5
    window: int = 10
    assigned_phase: float = 0.0
    observed_phase: float = 0.0
    durations: Deque[float] = field(default_factory=lambda: deque(maxlen=10))
    iterations: int = 0
    pause_iterations: List[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.baseline <= 0:
            raise ValueError("baseline iteration time must be > 0")
        self.durations = deque(self.durations, maxlen=self.window)


def monitor_tick(
    state: MonitorState,
    duration: float,
    priority: Priority,
) -> Optional[PauseLowPriority]:
    """Record one iteration; pause a drifting low-priority task if needed.

    A pause triggers when more than o_t of the windowed durations exceed
    a_t times the baseline.  High-priority tasks never receive an action.
    The window restarts after a pause so one excursion is counted once.
    """
    state.iterations += 1
    state.durations.append(duration)
    over = sum(1 for d in state.durations if d > state.a_t * state.baseline)
    if over <= state.o_t:
        return None
    if priority is Priority.HIGH:
        return None
    realign = (state.assigned_phase - state.observed_phase) % state.period
    state.durations.clear()
    state.pause_iterations.append(state.iterations)
    return PauseLowPriority(realign=realign)


@dataclass(frozen=True)
class PatternChange:
    action: str  # "unchanged" | "recalibrate"
    observed_period: float
    observed_duty: float


def detect_pattern_change(
    declared_period: float,
    declared_duty: float,
    observed_period: float,
    observed_duty: float,
    e_t: float,
    state: Optional[MonitorState] = None,
) -> PatternChange:
    """Recalibrate when the observed pattern drifts or pauses pile up.

    Triggers when the observed duty cycle or period deviates from the
    declared value by more than the e_t fraction, or when the last three
    pauses all happened within three windows' worth of iterations.
    """
    recalibrate = False
    if declared_period > 0 and abs(observed_period - declared_period) > e_t * declared_period:
        recalibrate = True
    if declared_duty > 0 and abs(observed_duty - declared_duty) > e_t * declared_duty:
        recalibrate = True
    if state is not None and len(state.pause_iterations) >= 3:
        recent = state.pause_iterations[-3:]
        if recent[-1] - recent[0] <= 3 * state.window:
            recalibrate = True
    return PatternChange(
        action="recalibrate" if recalibrate else "unchanged",
        observed_period=observed_period,
        observed_duty=observed_duty,
    )
