"""Optimization objectives: bandwidth utilization, latency sum, cushion width.

The three are compared lexicographically: maximize average bandwidth
utilization, then minimize the latency sum, then maximize the minimum
communication interval between contending tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import NoContendingPairs, UnplacedTask
from .geometry import TWO_PI, AngularProfile, CircleAbstraction, interval_distance
from .model import ClusterSpec, Placement, TaskSpec, WorkloadSpec


@dataclass(frozen=True)
class ObjectiveVector:
    """(gamma, latency, psi) with lexicographic order gamma desc, latency asc, psi desc.

    psi is None when no pair of tasks contends anywhere; a configuration
    without contention ranks above any finite cushion.
    """

    gamma: float
    latency: float
    psi: Optional[float]

    def better_than(self, other: "ObjectiveVector", atol: float = 1e-9) -> bool:
        if self.gamma > other.gamma + atol:
            return True
        if self.gamma < other.gamma - atol:
            return False
        if self.latency < other.latency - atol:
            return True
        if self.latency > other.latency + atol:
            return False
        a = math.inf if self.psi is None else self.psi
        b = math.inf if other.psi is None else other.psi
        return a > b + atol


def link_utilization(profile: AngularProfile, capacity: float) -> float:
    """Fraction of the link's capacity-time actually usable: clipped mean."""
    if capacity <= 0:
        raise ValueError("capacity must be > 0")
    return profile.clipped_integral(capacity) / (TWO_PI * capacity)


def avg_bw_utilization(per_link: Sequence[Tuple[float, float]], b_max: float) -> float:
    """Average over links of (B_l * xi_l / B_max); per_link holds (xi, B_l)."""
    if not per_link:
        raise ValueError("need at least one link")
    if b_max <= 0:
        raise ValueError("b_max must be > 0")
    return sum(b * xi / b_max for xi, b in per_link) / len(per_link)


def workload_latency(placement: Placement, workload: WorkloadSpec, cluster: ClusterSpec) -> float:
    """Latency sum of one workload, evaluated literally.

    First term: explicit job-to-job dependencies, over all ordered node
    pairs.  Second term: intra-job pairs over node pairs x <= y (node order
    as listed in the cluster), which includes the x == y self-pairs at the
    diagonal weight 1.
    """
    index = placement.index
    for job in workload.jobs:
        for tid in index.tasks_of_job[job.id]:
            if tid not in placement.assignments:
                raise UnplacedTask(f"task {tid} of workload {workload.id} is not placed")

    node_ids = cluster.node_ids
    counts: Dict[str, List[int]] = {}
    for job in workload.jobs:
        row = [0] * len(node_ids)
        for tid in index.tasks_of_job[job.id]:
            row[cluster.node_index(placement.assignments[tid])] += 1
        counts[job.id] = row

    total = 0.0
    for a, b in workload.dependencies:
        for x in range(len(node_ids)):
            if not counts[a][x]:
                continue
            for y in range(len(node_ids)):
                if counts[b][y]:
                    total += cluster.latency[x][y] * counts[a][x] * counts[b][y]
    for job in workload.jobs:
        row = counts[job.id]
        for x in range(len(node_ids)):
            if not row[x]:
                continue
            for y in range(x, len(node_ids)):
                if row[y]:
                    total += cluster.latency[x][y] * row[x] * row[y]
    return total


def total_latency(placement: Placement, workloads: Sequence[WorkloadSpec], cluster: ClusterSpec) -> float:
    """Sum of workload latencies over the deployed workloads."""
    total = 0.0
    for w in workloads:
        if placement.workload_deployed(w.id):
            total += workload_latency(placement, w, cluster)
    return total


def contending_pairs(
    tasks: Sequence[TaskSpec],
    capacity: float,
) -> List[Tuple[str, str]]:
    """Pairs of distinct-job tasks whose combined demand reaches capacity."""
    pairs: List[Tuple[str, str]] = []
    for i in range(len(tasks)):
        for j in range(i + 1, len(tasks)):
            s, t = tasks[i], tasks[j]
            if s.job_id == t.job_id:
                continue
            if s.bandwidth is None or t.bandwidth is None:
                continue
            if s.bandwidth + t.bandwidth >= capacity * (1.0 - 1e-12):
                pairs.append((s.id, t.id))
    return pairs


def min_comm_interval(
    abstractions: Mapping[str, CircleAbstraction],
    tasks: Sequence[TaskSpec],
    capacity: float,
) -> float:
    """Minimum midpoint distance over contending task pairs and repetitions.

    Raises NoContendingPairs when the contention predicate never holds;
    the third optimization stage is then skipped by the caller.
    """
    pairs = contending_pairs(tasks, capacity)
    if not pairs:
        raise NoContendingPairs("no pair of tasks on this link contends")
    best = math.inf
    for sid, tid in pairs:
        for ia in abstractions[sid].rotated_intervals():
            for ib in abstractions[tid].rotated_intervals():
                best = min(best, interval_distance(ia, ib))
    return best
