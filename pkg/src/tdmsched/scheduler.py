"""Per-task scheduling pipeline: PreFilter, Filter, Score, NormalizeScore, Reserve.

Scoring enumerates rotation-index combinations on the candidate node's host
link at a fixed angular resolution; a node scores 100 exactly when some
combination keeps every angular range's mean demand within link capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import JobRejected, NoFeasibleNode
from .geometry import (
    TWO_PI,
    CircleAbstraction,
    PeriodFit,
    UnifiedPeriod,
    abstract,
    unify_periods_bounded,
)
from .model import (
    ClusterSpec,
    JobSpec,
    Placement,
    TaskSpec,
    highest_priority_task,
    priority_key,
)

PERFECT = 100.0
_SCORE_TOL = 1e-9


@dataclass(frozen=True)
class SchedulerParams:
    g_t: float = 0.005          # period-averaging threshold, seconds
    e_t: float = 0.10           # idle-injection bound, fraction of a task's period
    di_pre: int = 72            # angular discretization
    max_multiple: int = 64      # circle period cap, times the longest task period


@dataclass(frozen=True)
class LatencyScoreCache:
    """Per-pod latency scores, recomputed for every pod being scheduled."""

    pod_id: str
    deltas: Mapping[str, float]


@dataclass(frozen=True)
class RotationScheme:
    """Relative rotation assignment for the tasks sharing one host link."""

    node: str
    di_pre: int
    t_l: float
    reference_task: str
    task_ids: Tuple[str, ...]
    indices: Mapping[str, int]        # task -> rotation index; reference at 0
    time_shifts: Mapping[str, float]  # task -> seconds, index / di_pre * t_l
    fits: Mapping[str, PeriodFit]
    score: float

    def job_shift(self, job_of: Mapping[str, str]) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for tid, shift in self.time_shifts.items():
            out[job_of[tid]] = shift
        return out


@dataclass(frozen=True)
class SchedulingOutcome:
    """Result of one pod's trip through the pipeline, sent to the controller."""

    task_id: str
    node: str
    score: float
    early_return: bool
    skip_phase_three: bool
    scheme: Optional[RotationScheme]
    sharing_set: Tuple[str, ...]


@dataclass(frozen=True)
class ScoreResult:
    score: float
    early_return: bool
    indices: Optional[Mapping[str, int]] = None  # job -> rotation index
    problem: Optional["LinkProblem"] = None


class LinkProblem:
    """Rotation-enumeration state for one link's sharing set.

    Rotation is a per-job variable: tasks of one job always carry equal
    rotation.  The job owning the link's highest-priority task is pinned at
    rotation 0; the remaining jobs are free variables, the job being
    scheduled varying fastest.
    """

    def __init__(
        self,
        node: str,
        capacity: float,
        tasks: Sequence[TaskSpec],
        params: SchedulerParams,
        pod_job: Optional[str] = None,
    ):
        self.node = node
        self.capacity = capacity
        self.params = params
        self.di_pre = params.di_pre
        self.tasks: Tuple[TaskSpec, ...] = tuple(tasks)
        self.unified: UnifiedPeriod = unify_periods_bounded(
            self.tasks, params.g_t, params.e_t, params.max_multiple
        )
        self.t_l = self.unified.t_l
        self.abstractions: Dict[str, CircleAbstraction] = {
            t.id: abstract(t, self.unified) for t in self.tasks
        }
        self.reference_task: str = highest_priority_task(self.tasks).id
        ref_job = next(t.job_id for t in self.tasks if t.id == self.reference_task)
        self.reference_job: str = ref_job

        by_job: Dict[str, List[TaskSpec]] = {}
        for t in self.tasks:
            by_job.setdefault(t.job_id, []).append(t)
        self.job_tasks: Dict[str, List[TaskSpec]] = by_job

        free = [j for j in by_job if j != ref_job]
        free.sort(key=lambda j: (min(priority_key(t) for t in by_job[j]), j))
        if pod_job is not None and pod_job in free:
            free.remove(pod_job)
            free.append(pod_job)
        self.free_jobs: List[str] = free

        delta = TWO_PI / self.di_pre
        self.var_sizes: List[int] = []
        for j in free:
            mul = max(self.unified.fit(t.id).mul for t in by_job[j])
            self.var_sizes.append(max(1, math.ceil(self.di_pre / mul)))

        self._coverage: Dict[str, np.ndarray] = {
            j: self._job_coverage(ts) for j, ts in by_job.items()
        }
        self.base: np.ndarray = self._coverage[ref_job].copy()
        self._rolls: List[np.ndarray] = []
        for j, size in zip(free, self.var_sizes):
            vec = self._coverage[j]
            self._rolls.append(np.stack([np.roll(vec, idx) for idx in range(size)]))

    def _job_coverage(self, tasks: Sequence[TaskSpec]) -> np.ndarray:
        """Mean-demand contribution of a job's tasks per angular range."""
        n = self.di_pre
        delta = TWO_PI / n
        cov = np.zeros(n)
        for t in tasks:
            rate = t.bandwidth or 0.0
            for s, e in self.abstractions[t.id].intervals:
                if e - s <= 0:
                    continue
                k0 = int(s // delta)
                k1 = min(n - 1, int(math.ceil(e / delta)) - 1)
                for k in range(k0, k1 + 1):
                    lo = max(s, k * delta)
                    hi = min(e, (k + 1) * delta)
                    if hi > lo:
                        cov[k] += rate * (hi - lo) / delta
        return cov

    # -- scoring -----------------------------------------------------------

    def _excess_row(self, prefix_total: np.ndarray, last_rolls: np.ndarray) -> np.ndarray:
        totals = prefix_total[None, :] + last_rolls
        return np.maximum(totals - self.capacity, 0.0).sum(axis=1)

    def score_of_excess(self, excess: np.ndarray) -> np.ndarray:
        raw = PERFECT * (1.0 - excess / (self.capacity * self.di_pre))
        return np.clip(raw, 0.0, PERFECT)

    def _prefixes(self) -> Iterator[Tuple[Tuple[int, ...], np.ndarray]]:
        sizes = self.var_sizes[:-1]
        if not sizes:
            yield (), self.base
            return
        counters = [0] * len(sizes)
        while True:
            total = self.base
            for roll, idx in zip(self._rolls[:-1], counters):
                total = total + roll[idx]
            yield tuple(counters), total
            pos = len(sizes) - 1
            while pos >= 0:
                counters[pos] += 1
                if counters[pos] < sizes[pos]:
                    break
                counters[pos] = 0
                pos -= 1
            if pos < 0:
                return

    def _perfect_tol(self) -> float:
        return self.capacity * self.di_pre * 1e-12

    def first_run_middle(self) -> Tuple[float, Optional[Dict[str, int]]]:
        """Traverse combinations; stop at the end of the first perfect run.

        Returns (score, job -> index).  When no combination is perfect, the
        best-scoring combination (earliest in traversal order) is returned.
        Runs are maximal stretches of consecutive perfect combinations of
        the fastest-varying index; a run closes at the sweep boundary.
        """
        if not self.free_jobs:
            excess = float(np.maximum(self.base - self.capacity, 0.0).sum())
            score = float(self.score_of_excess(np.array([excess]))[0])
            return score, {}
        tol = self._perfect_tol()
        best_score = -1.0
        best_combo: Optional[Tuple[int, ...]] = None
        for prefix, total in self._prefixes():
            excess = self._excess_row(total, self._rolls[-1])
            perfect = excess <= tol
            if perfect.any():
                start = int(np.argmax(perfect))
                end = start
                while end + 1 < len(perfect) and perfect[end + 1]:
                    end += 1
                middle = (start + end) // 2
                combo = prefix + (middle,)
                return PERFECT, self._combo_to_indices(combo)
            scores = self.score_of_excess(excess)
            idx = int(np.argmax(scores))
            if scores[idx] > best_score + _SCORE_TOL:
                best_score = float(scores[idx])
                best_combo = prefix + (idx,)
        assert best_combo is not None
        return best_score, self._combo_to_indices(best_combo)

    def run_middles(self) -> Tuple[float, List[Tuple[int, ...]], bool]:
        """Full enumeration: middles of every maximal best-score run.

        Returns (best score, candidate combos, perfect_exists).  Runs are
        stretches of consecutive combinations achieving the best score
        (perfect runs when a perfect combination exists).
        """
        if not self.free_jobs:
            excess = float(np.maximum(self.base - self.capacity, 0.0).sum())
            score = float(self.score_of_excess(np.array([excess]))[0])
            return score, [()], score >= PERFECT - _SCORE_TOL
        tol = self._perfect_tol()
        best = -1.0
        for _, total in self._prefixes():
            excess = self._excess_row(total, self._rolls[-1])
            scores = self.score_of_excess(excess)
            m = float(scores.max())
            if m > best:
                best = m
        perfect_exists = best >= PERFECT - _SCORE_TOL
        if perfect_exists:
            best = PERFECT
        middles: List[Tuple[int, ...]] = []
        for prefix, total in self._prefixes():
            excess = self._excess_row(total, self._rolls[-1])
            scores = self.score_of_excess(excess)
            hit = scores >= best - _SCORE_TOL
            i = 0
            n = len(hit)
            while i < n:
                if hit[i]:
                    j = i
                    while j + 1 < n and hit[j + 1]:
                        j += 1
                    middles.append(prefix + ((i + j) // 2,))
                    i = j + 1
                else:
                    i += 1
        return best, middles, perfect_exists

    def _combo_to_indices(self, combo: Tuple[int, ...]) -> Dict[str, int]:
        return {j: int(i) for j, i in zip(self.free_jobs, combo)}

    def rotated_abstractions(self, indices: Mapping[str, int]) -> Dict[str, CircleAbstraction]:
        delta = TWO_PI / self.di_pre
        out: Dict[str, CircleAbstraction] = {}
        for t in self.tasks:
            idx = indices.get(t.job_id, 0)
            out[t.id] = self.abstractions[t.id].with_rotation(idx * delta)
        return out

    def build_scheme(self, indices: Mapping[str, int], score: float) -> RotationScheme:
        task_indices: Dict[str, int] = {}
        shifts: Dict[str, float] = {}
        for t in self.tasks:
            idx = int(indices.get(t.job_id, 0))
            task_indices[t.id] = idx
            shifts[t.id] = idx / self.di_pre * self.t_l
        return RotationScheme(
            node=self.node,
            di_pre=self.di_pre,
            t_l=self.t_l,
            reference_task=self.reference_task,
            task_ids=tuple(t.id for t in self.tasks),
            indices=task_indices,
            time_shifts=shifts,
            fits={t.id: self.unified.fit(t.id) for t in self.tasks},
            score=score,
        )


# -- PreFilter ---------------------------------------------------------------


def pre_filter(pod: TaskSpec, placement: Placement, cluster: ClusterSpec) -> LatencyScoreCache:
    """Latency score per node: sum of weights to deployed dependents.

    Falls back to the node's average latency row when the pod is low_comm
    or has no deployed dependent.
    """
    deployed: List[str] = []
    if not pod.low_comm:
        for tid in placement.index.dependent_tasks.get(pod.id, ()):
            node = placement.assignments.get(tid)
            if node is not None:
                deployed.append(node)
    deltas: Dict[str, float] = {}
    for node in cluster.nodes:
        if deployed:
            deltas[node.id] = sum(cluster.tau(node.id, other) for other in deployed)
        else:
            deltas[node.id] = cluster.tau_row_average(node.id)
    return LatencyScoreCache(pod_id=pod.id, deltas=deltas)


# -- Filter ------------------------------------------------------------------


class _UnionFind:
    def __init__(self) -> None:
        self.parent: Dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> bool:
        """Returns False when a and b were already connected (cycle)."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def has_dependency_cycle(
    placement: Placement,
    pod: TaskSpec,
    node_id: str,
    cluster: ClusterSpec,
) -> bool:
    """Cycle test on the bipartite contention graph (jobs vs links).

    A job touches a link when one of its bandwidth-declaring tasks sits on
    it; the link contributes contention edges only when at least two jobs
    share it and their aggregate demand exceeds the link capacity (only
    then does an interleaving scheme constrain anything).
    """
    uf = _UnionFind()
    for n in cluster.nodes:
        tasks = placement.sharing_tasks(n.id)
        if n.id == node_id and not pod.low_comm:
            tasks = tasks + [pod]
        jobs: List[str] = []
        total = 0.0
        for t in tasks:
            total += t.bandwidth or 0.0
            if t.job_id not in jobs:
                jobs.append(t.job_id)
        if len(jobs) < 2 or total <= n.link_bandwidth * (1.0 + 1e-12):
            continue
        link_vertex = f"link::{n.id}"
        for j in jobs:
            if not uf.union(f"job::{j}", link_vertex):
                return True
    return False


def filter_nodes(
    pod: TaskSpec,
    placement: Placement,
    cluster: ClusterSpec,
) -> List[str]:
    """Drop nodes with contention loops, short resources, or a thin link."""
    out: List[str] = []
    for node in cluster.nodes:
        if has_dependency_cycle(placement, pod, node.id, cluster):
            continue
        if not placement.fits(pod, node.id):
            continue
        if not pod.low_comm and (pod.bandwidth or 0.0) > node.link_bandwidth * (1.0 + 1e-12):
            continue
        out.append(node.id)
    if not out:
        raise NoFeasibleNode(f"no candidate node left for task {pod.id}")
    return out


# -- Score -------------------------------------------------------------------


def score(
    pod: TaskSpec,
    node_id: str,
    placement: Placement,
    cluster: ClusterSpec,
    params: SchedulerParams,
) -> ScoreResult:
    """Bandwidth score of one candidate node plus feasible rotation indices."""
    node = cluster.node(node_id)
    existing = placement.sharing_tasks(node_id)
    if pod.low_comm:
        return ScoreResult(PERFECT, early_return=True)
    aggregate = sum(t.bandwidth or 0.0 for t in existing) + (pod.bandwidth or 0.0)
    if not existing or aggregate <= node.link_bandwidth * (1.0 + 1e-12):
        return ScoreResult(PERFECT, early_return=True)
    problem = LinkProblem(node_id, node.link_bandwidth, existing + [pod], params, pod_job=pod.job_id)
    value, indices = problem.first_run_middle()
    return ScoreResult(value, early_return=False, indices=indices, problem=problem)


# -- NormalizeScore ------------------------------------------------------------


def normalize_and_select(
    scores: Mapping[str, float],
    cache: LatencyScoreCache,
    pod: TaskSpec,
) -> str:
    """Pick the node: unique best score wins, latency breaks score ties."""
    if not scores:
        raise NoFeasibleNode(f"no scored node for task {pod.id}")
    best = max(scores.values())
    candidates = sorted(n for n, s in scores.items() if s >= best - _SCORE_TOL)
    if len(candidates) == 1:
        return candidates[0]
    all_deltas = list(cache.deltas.values())
    dmin, dmax = min(all_deltas), max(all_deltas)
    chosen: Optional[str] = None
    chosen_value = -math.inf
    for n in candidates:
        d = cache.deltas[n]
        if dmax != dmin:
            normalized = 100.0 - math.floor(100.0 * (d - dmin) / (dmax - dmin))
        else:
            normalized = 100.0 - (d - dmin)
        value = (100.0 - normalized) if pod.low_comm else normalized
        if value > chosen_value + _SCORE_TOL:
            chosen = n
            chosen_value = value
    assert chosen is not None
    return chosen


# -- Reserve -------------------------------------------------------------------


def reserve(
    pod: TaskSpec,
    node_id: str,
    result: ScoreResult,
    placement: Placement,
) -> SchedulingOutcome:
    """Commit the pod, derive time shifts, and set the stage-three skip flag."""
    placement.place(pod, node_id)
    sharing = tuple(placement.sharing[node_id])
    skip = bool(
        result.early_return
        or result.score < PERFECT - _SCORE_TOL
        or len(sharing) == 2
    )
    scheme: Optional[RotationScheme] = None
    if result.indices is not None and result.problem is not None:
        scheme = result.problem.build_scheme(result.indices, result.score)
    return SchedulingOutcome(
        task_id=pod.id,
        node=node_id,
        score=result.score,
        early_return=result.early_return,
        skip_phase_three=skip,
        scheme=scheme,
        sharing_set=sharing,
    )


# -- pipeline ------------------------------------------------------------------


def schedule_task(
    pod: TaskSpec,
    placement: Placement,
    cluster: ClusterSpec,
    params: SchedulerParams,
) -> SchedulingOutcome:
    cache = pre_filter(pod, placement, cluster)
    candidates = filter_nodes(pod, placement, cluster)
    results = {n: score(pod, n, placement, cluster, params) for n in candidates}
    chosen = normalize_and_select({n: r.score for n, r in results.items()}, cache, pod)
    return reserve(pod, chosen, results[chosen], placement)


def schedule_job(
    job: JobSpec,
    placement: Placement,
    cluster: ClusterSpec,
    params: SchedulerParams,
) -> List[SchedulingOutcome]:
    """Gang admission: all tasks or none; placement is untouched on rejection."""
    trial = placement.clone()
    outcomes: List[SchedulingOutcome] = []
    for task in sorted(job.tasks, key=lambda t: t.submit_order):
        try:
            outcomes.append(schedule_task(task, trial, cluster, params))
        except NoFeasibleNode as exc:
            raise JobRejected(job.id, task.id, "filter", str(exc)) from exc
    placement.assignments = trial.assignments
    placement.free = trial.free
    placement.node_tasks = trial.node_tasks
    placement.sharing = trial.sharing
    return outcomes
