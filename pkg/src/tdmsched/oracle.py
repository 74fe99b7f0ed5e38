"""Brute-force reference solver for the three-stage optimization.

Enumerates every full placement satisfying the resource, bandwidth and
all-or-nothing constraints, and for each link every rotation-index
combination, then applies the stages in order: maximize average bandwidth
utilization, minimize the latency sum, maximize the minimum communication
interval.  Exact piecewise integration is used for utilization, so the
result is a true reference for the pipeline at the same discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InstanceTooLarge, TdmschedError
from .geometry import TWO_PI, interval_midpoint
from .metrics import ObjectiveVector, total_latency
from .model import ClusterSpec, Placement, TaskSpec, WorkloadIndex, WorkloadSpec
from .scheduler import LinkProblem, RotationScheme, SchedulerParams, _UnionFind


@dataclass(frozen=True)
class OracleResult:
    placement: Mapping[str, str]
    schemes: Mapping[str, RotationScheme]
    objective: ObjectiveVector


@dataclass
class _LinkEval:
    problem: LinkProblem
    combos: np.ndarray          # (C, m) index vectors, lexicographic order
    xi: np.ndarray              # (C,) exact link utilization per combo
    mass: float


def _segment_arrays(problem: LinkProblem) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-repetition (start, width, rate, free-var id) arrays; -1 = pinned."""
    starts: List[float] = []
    widths: List[float] = []
    rates: List[float] = []
    var_ids: List[int] = []
    var_of_job = {j: i for i, j in enumerate(problem.free_jobs)}
    for t in problem.tasks:
        ab = problem.abstractions[t.id]
        vid = var_of_job.get(t.job_id, -1)
        for s, e in ab.intervals:
            if e - s <= 0:
                continue
            starts.append(s)
            widths.append(e - s)
            rates.append(t.bandwidth or 0.0)
            var_ids.append(vid)
    return (
        np.asarray(starts),
        np.asarray(widths),
        np.asarray(rates),
        np.asarray(var_ids, dtype=int),
    )


def _exact_xi(problem: LinkProblem, combos: np.ndarray) -> np.ndarray:
    """Exact utilization of every combo via a vectorized event sweep."""
    starts, widths, rates, var_ids = _segment_arrays(problem)
    cap = problem.capacity
    c = combos.shape[0]
    if len(starts) == 0:
        return np.zeros(c)
    delta = TWO_PI / problem.di_pre
    theta = np.zeros((c, len(starts)))
    mask = var_ids >= 0
    if mask.any() and combos.size:
        theta[:, mask] = combos[:, var_ids[mask]] * delta
    seg_start = (starts[None, :] + theta) % TWO_PI
    seg_end_raw = seg_start + widths[None, :]
    wraps = seg_end_raw > TWO_PI
    level0 = (rates[None, :] * wraps).sum(axis=1)
    seg_end = np.where(wraps, seg_end_raw - TWO_PI, seg_end_raw)

    angles = np.concatenate([seg_start, seg_end], axis=1)
    deltas = np.concatenate([np.broadcast_to(rates, seg_start.shape),
                             -np.broadcast_to(rates, seg_start.shape)], axis=1)
    order = np.argsort(angles, axis=1, kind="stable")
    angles_s = np.take_along_axis(angles, order, axis=1)
    deltas_s = np.take_along_axis(deltas, order, axis=1)
    levels = level0[:, None] + np.cumsum(deltas_s, axis=1)

    first_gap = angles_s[:, 0]
    inner_gaps = np.diff(angles_s, axis=1)
    last_gap = TWO_PI - angles_s[:, -1]
    clip = np.maximum(level0 - cap, 0.0) * first_gap
    clip += (np.maximum(levels[:, :-1] - cap, 0.0) * inner_gaps).sum(axis=1)
    clip += np.maximum(levels[:, -1] - cap, 0.0) * last_gap

    mass = float((rates * widths).sum())
    return (mass - clip) / (TWO_PI * cap)


def _combo_matrix(var_sizes: Sequence[int]) -> np.ndarray:
    if not var_sizes:
        return np.zeros((1, 0), dtype=int)
    grids = np.indices(tuple(var_sizes))
    return grids.reshape(len(var_sizes), -1).T.copy()


def _pair_distance_tables(problem: LinkProblem) -> List[Tuple[int, int, np.ndarray]]:
    """For each contending pair: (var_s, var_t, min distance per index diff)."""
    var_of_job = {j: i for i, j in enumerate(problem.free_jobs)}
    tables: List[Tuple[int, int, np.ndarray]] = []
    tasks = problem.tasks
    di = problem.di_pre
    delta = TWO_PI / di
    for i in range(len(tasks)):
        for j in range(i + 1, len(tasks)):
            s, t = tasks[i], tasks[j]
            if s.job_id == t.job_id:
                continue
            if (s.bandwidth or 0.0) + (t.bandwidth or 0.0) < problem.capacity * (1.0 - 1e-12):
                continue
            mids_s = np.array([interval_midpoint(iv) for iv in problem.abstractions[s.id].intervals])
            mids_t = np.array([interval_midpoint(iv) for iv in problem.abstractions[t.id].intervals])
            table = np.empty(di)
            for m in range(di):
                diff = (mids_s[:, None] - mids_t[None, :] + m * delta) % TWO_PI
                table[m] = np.minimum(diff, TWO_PI - diff).min()
            tables.append((var_of_job.get(s.job_id, -1), var_of_job.get(t.job_id, -1), table))
    return tables


def _psi_per_combo(problem: LinkProblem, combos: np.ndarray) -> Optional[np.ndarray]:
    tables = _pair_distance_tables(problem)
    if not tables:
        return None
    di = problem.di_pre
    c = combos.shape[0]
    psi = np.full(c, np.inf)
    for var_s, var_t, table in tables:
        idx_s = combos[:, var_s] if var_s >= 0 else np.zeros(c, dtype=int)
        idx_t = combos[:, var_t] if var_t >= 0 else np.zeros(c, dtype=int)
        psi = np.minimum(psi, table[(idx_s - idx_t) % di])
    return psi


def _contention_cycle(placement: Placement, cluster: ClusterSpec) -> bool:
    uf = _UnionFind()
    for n in cluster.nodes:
        tasks = placement.sharing_tasks(n.id)
        jobs: List[str] = []
        total = 0.0
        for t in tasks:
            total += t.bandwidth or 0.0
            if t.job_id not in jobs:
                jobs.append(t.job_id)
        if len(jobs) < 2 or total <= n.link_bandwidth * (1.0 + 1e-12):
            continue
        for j in jobs:
            if not uf.union(f"job::{j}", f"link::{n.id}"):
                return True
    return False


def _enumerate_placements(
    cluster: ClusterSpec,
    tasks: Sequence[TaskSpec],
) -> List[Tuple[int, ...]]:
    """All full assignments (node index per task) meeting Eqs. 13-14."""
    n_nodes = len(cluster.nodes)
    free = [[cluster.nodes[i].capacity(r) for r in ("cpu", "mem", "gpu")] for i in range(n_nodes)]
    out: List[Tuple[int, ...]] = []
    chosen: List[int] = []

    def recurse(pos: int) -> None:
        if pos == len(tasks):
            out.append(tuple(chosen))
            return
        t = tasks[pos]
        req = (t.cpu, t.mem, t.gpu)
        for i in range(n_nodes):
            node = cluster.nodes[i]
            if not t.low_comm and (t.bandwidth or 0.0) > node.link_bandwidth * (1.0 + 1e-12):
                continue
            if any(free[i][k] < req[k] - 1e-12 for k in range(3)):
                continue
            for k in range(3):
                free[i][k] -= req[k]
            chosen.append(i)
            recurse(pos + 1)
            chosen.pop()
            for k in range(3):
                free[i][k] += req[k]

    recurse(0)
    return out


def solve(
    cluster: ClusterSpec,
    workloads: Sequence[WorkloadSpec],
    di_pre: int = 72,
    params: Optional[SchedulerParams] = None,
    max_nodes: int = 4,
    max_jobs: int = 4,
    max_tasks_per_job: int = 3,
    fixed_assignment: Optional[Mapping[str, str]] = None,
) -> OracleResult:
    """Lexicographically optimal placement and rotation over the full space.

    With `fixed_assignment` the placement is pinned (the third stage's
    "tasks already assigned" constraint) and only rotations are optimized.
    """
    index = WorkloadIndex(workloads)
    n_jobs = len(index.job_by_id)
    if (
        len(cluster.nodes) > max_nodes
        or n_jobs > max_jobs
        or any(len(ts) > max_tasks_per_job for ts in index.tasks_of_job.values())
        or di_pre > 72
    ):
        raise InstanceTooLarge(
            f"instance exceeds oracle bounds ({len(cluster.nodes)} nodes, {n_jobs} jobs)"
        )
    if params is None:
        params = SchedulerParams(di_pre=di_pre)
    else:
        params = SchedulerParams(params.g_t, params.e_t, di_pre, params.max_multiple)

    tasks = sorted(index.all_tasks(), key=lambda t: t.submit_order)
    if fixed_assignment is not None:
        assignments = [tuple(cluster.node_index(fixed_assignment[t.id]) for t in tasks)]
    else:
        assignments = _enumerate_placements(cluster, tasks)
    if not assignments:
        raise TdmschedError("no feasible full placement exists")

    b_max = cluster.b_max
    n_links = len(cluster.nodes)

    def build_placement(assign: Tuple[int, ...]) -> Placement:
        p = Placement(cluster=cluster, index=index)
        for t, i in zip(tasks, assign):
            p.place(t, cluster.nodes[i].id)
        return p

    def gamma_bound(assign: Tuple[int, ...]) -> float:
        # period averaging can shrink a task's effective period by up to
        # g_t, inflating its duty cycle; bound the mass accordingly
        mass = [0.0] * n_links
        for t, i in zip(tasks, assign):
            if t.low_comm:
                continue
            period = t.period or 0.0
            duty_cap = 1.0
            if period > params.g_t:
                duty_cap = min(1.0, t.comm_duration / (period - params.g_t))
            mass[i] += (t.bandwidth or 0.0) * duty_cap * TWO_PI
        total = 0.0
        for i, node in enumerate(cluster.nodes):
            xi_hat = min(1.0, mass[i] / (TWO_PI * node.link_bandwidth))
            total += node.link_bandwidth * xi_hat / b_max
        return total / n_links

    ordered = sorted(range(len(assignments)), key=lambda k: (-gamma_bound(assignments[k]), assignments[k]))

    evaluated: List[Tuple[Tuple[int, ...], Placement, Dict[str, _LinkEval], float]] = []
    best_gamma = -1.0
    for k in ordered:
        assign = assignments[k]
        if gamma_bound(assign) < best_gamma - 1e-9:
            break
        placement = build_placement(assign)
        if _contention_cycle(placement, cluster):
            continue
        link_evals: Dict[str, _LinkEval] = {}
        gamma_total = 0.0
        for node in cluster.nodes:
            link_tasks = placement.sharing_tasks(node.id)
            if not link_tasks:
                continue
            problem = LinkProblem(node.id, node.link_bandwidth, link_tasks, params)
            combos = _combo_matrix(problem.var_sizes)
            xi = _exact_xi(problem, combos)
            link_evals[node.id] = _LinkEval(problem, combos, xi, float(xi.max()))
            gamma_total += node.link_bandwidth * float(xi.max()) / b_max
        gamma = gamma_total / n_links
        evaluated.append((assign, placement, link_evals, gamma))
        if gamma > best_gamma + 1e-12:
            best_gamma = gamma

    if not evaluated:
        raise TdmschedError("every feasible placement creates a contention cycle")

    stage1 = [e for e in evaluated if e[3] >= best_gamma - 1e-9]
    lambdas = [total_latency(p, workloads, cluster) for _, p, _, _ in stage1]
    best_lambda = min(lambdas)
    stage2 = [e for e, lam in zip(stage1, lambdas) if lam <= best_lambda + 1e-9]

    stage2.sort(key=lambda e: e[0])
    best_choice = None
    best_psi: Optional[float] = None
    for assign, placement, link_evals, gamma in stage2:
        psi_global = math.inf
        any_pairs = False
        link_schemes: Dict[str, RotationScheme] = {}
        for node_id, ev in sorted(link_evals.items()):
            xi_max = float(ev.xi.max())
            hit = ev.xi >= xi_max - 1e-12
            combos = ev.combos[hit]
            psi_vec = _psi_per_combo(ev.problem, combos)
            if psi_vec is None:
                chosen = combos[0]
            else:
                any_pairs = True
                best_idx = int(np.argmax(psi_vec))
                psi_global = min(psi_global, float(psi_vec[best_idx]))
                chosen = combos[best_idx]
            indices = ev.problem._combo_to_indices(tuple(int(x) for x in chosen))
            link_schemes[node_id] = ev.problem.build_scheme(indices, _scheme_score(ev.problem, chosen))
        psi_value: Optional[float] = psi_global if any_pairs else None
        key_new = math.inf if psi_value is None else psi_value
        key_old = math.inf if best_psi is None else best_psi
        take = False
        if best_choice is None:
            take = True
        elif key_new > key_old + 1e-12:
            take = True
        if take:
            best_choice = (assign, placement, link_schemes, gamma)
            best_psi = psi_value

    assert best_choice is not None
    assign, placement, link_schemes, gamma = best_choice
    objective = ObjectiveVector(
        gamma=gamma,
        latency=total_latency(placement, workloads, cluster),
        psi=best_psi,
    )
    mapping = {t.id: cluster.nodes[i].id for t, i in zip(tasks, assign)}
    return OracleResult(placement=mapping, schemes=link_schemes, objective=objective)


def _scheme_score(problem: LinkProblem, combo: np.ndarray) -> float:
    total = problem.base.copy()
    for vec, idx in zip(problem._rolls, combo):
        total = total + vec[int(idx)]
    excess = float(np.maximum(total - problem.capacity, 0.0).sum())
    return float(problem.score_of_excess(np.array([excess]))[0])
