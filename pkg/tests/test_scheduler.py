"""Five-phase pipeline: latency cache, filters, scoring, selection, gangs."""

import math

import pytest

from tdmsched.errors import JobRejected, NoFeasibleNode
from tdmsched.geometry import TWO_PI
from tdmsched.model import Placement, Priority, WorkloadIndex
from tdmsched.scheduler import (
    LatencyScoreCache,
    LinkProblem,
    SchedulerParams,
    filter_nodes,
    has_dependency_cycle,
    normalize_and_select,
    pre_filter,
    reserve,
    schedule_job,
    schedule_task,
    score,
)

from conftest import make_cluster, make_task, make_workload

B = 10e9
PARAMS = SchedulerParams()


def setup(workloads, cluster=None, **kw):
    cluster = cluster or make_cluster(**kw) if kw else (cluster or make_cluster())
    index = WorkloadIndex(workloads)
    return Placement(cluster=cluster, index=index), cluster


class TestPreFilter:
    def test_sums_latency_to_deployed_dependents(self):
        cluster = make_cluster(nodes=2, off_diagonal=5.0)
        w = make_workload("w1", tasks=2)
        placement, _ = setup([w], cluster)
        t0, t1 = w.jobs[0].tasks
        placement.place(t0, "n1")
        cache = pre_filter(t1, placement, cluster)
        assert cache.deltas["n0"] == pytest.approx(5.0)
        assert cache.deltas["n1"] == pytest.approx(1.0)  # diagonal weight

    def test_fallback_row_average(self):
        lat = [[1.0, 2.0, 3.0], [2.0, 1.0, 2.0], [3.0, 2.0, 1.0]]
        cluster = make_cluster(nodes=3, latency=lat)
        w = make_workload("w1")
        placement, _ = setup([w], cluster)
        cache = pre_filter(w.jobs[0].tasks[0], placement, cluster)
        assert cache.deltas["n0"] == pytest.approx(2.0)

    def test_low_comm_always_uses_fallback(self):
        cluster = make_cluster(nodes=2, off_diagonal=4.0)
        w1 = make_workload("w1")
        w2 = make_workload("w2", low_comm=True)
        placement, _ = setup([w1, w2], cluster)
        placement.place(w1.jobs[0].tasks[0], "n0")
        cache = pre_filter(w2.jobs[0].tasks[0], placement, cluster)
        assert cache.deltas["n0"] == pytest.approx((1.0 + 4.0) / 2)


class TestFilter:
    def test_bandwidth_too_large(self):
        cluster = make_cluster(nodes=2, bandwidth=10e9)
        w = make_workload("w1", bandwidth=12e9)
        placement, _ = setup([w], cluster)
        with pytest.raises(NoFeasibleNode):
            filter_nodes(w.jobs[0].tasks[0], placement, cluster)

    def test_gpu_shortage_removes_node(self):
        cluster = make_cluster(nodes=2, gpu=1)
        w1 = make_workload("w1")
        w2 = make_workload("w2", gpu=2.0)
        placement, _ = setup([w1, w2], cluster)
        placement.place(w1.jobs[0].tasks[0], "n0")
        with pytest.raises(NoFeasibleNode):
            filter_nodes(w2.jobs[0].tasks[0], placement, cluster)

    def test_low_comm_skips_bandwidth_check(self):
        cluster = make_cluster(nodes=1, bandwidth=10e9)
        w1 = make_workload("w1", bandwidth=10e9)
        w2 = make_workload("w2", low_comm=True)
        placement, _ = setup([w1, w2], cluster)
        placement.place(w1.jobs[0].tasks[0], "n0")
        assert filter_nodes(w2.jobs[0].tasks[0], placement, cluster) == ["n0"]


class TestDependencyCycle:
    def _bundle(self, n_jobs=3, tasks=2):
        workloads = [
            make_workload(f"w{i}", tasks=tasks, bandwidth=B, duty=0.4) for i in range(n_jobs)
        ]
        cluster = make_cluster(nodes=3, gpu=4, bandwidth=B)
        placement, _ = setup(workloads, cluster)
        return workloads, cluster, placement

    def test_three_job_loop_detected(self):
        # jobs a/b on link0, b/c on link1, c/a on link2 -> closing edge
        workloads, cluster, placement = self._bundle()
        a, b, c = (w.jobs[0].tasks for w in workloads)
        placement.place(a[0], "n0")
        placement.place(b[0], "n0")
        placement.place(b[1], "n1")
        placement.place(c[0], "n1")
        placement.place(c[1], "n2")
        assert has_dependency_cycle(placement, a[1], "n2", cluster)

    def test_chain_is_fine(self):
        workloads, cluster, placement = self._bundle()
        a, b, c = (w.jobs[0].tasks for w in workloads)
        placement.place(a[0], "n0")
        placement.place(b[0], "n0")
        placement.place(b[1], "n1")
        placement.place(c[0], "n1")
        assert not has_dependency_cycle(placement, c[1], "n2", cluster)

    def test_single_job_single_link(self):
        workloads, cluster, placement = self._bundle(n_jobs=1)
        a = workloads[0].jobs[0].tasks
        placement.place(a[0], "n0")
        assert not has_dependency_cycle(placement, a[1], "n0", cluster)


class TestScore:
    def test_low_comm_early_return(self):
        cluster = make_cluster(nodes=1)
        w1 = make_workload("w1", duty=0.5, bandwidth=B)
        w2 = make_workload("w2", low_comm=True)
        placement, _ = setup([w1, w2], cluster)
        placement.place(w1.jobs[0].tasks[0], "n0")
        result = score(w2.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
        assert result.score == 100.0 and result.early_return

    def test_empty_node_early_return(self):
        cluster = make_cluster(nodes=1)
        w = make_workload("w1", bandwidth=B)
        placement, _ = setup([w], cluster)
        result = score(w.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
        assert result.score == 100.0 and result.early_return

    def test_exclusive_bandwidth_early_return(self):
        cluster = make_cluster(nodes=1)
        w1 = make_workload("w1", bandwidth=0.5 * B)
        w2 = make_workload("w2", bandwidth=0.5 * B)
        placement, _ = setup([w1, w2], cluster)
        placement.place(w1.jobs[0].tasks[0], "n0")
        result = score(w2.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
        assert result.score == 100.0 and result.early_return

    def test_perfect_run_middle_pinned(self):
        # derived by exhaustive enumeration: perfect indices 18..54, middle 36
        cluster = make_cluster(nodes=1)
        w1 = make_workload("w1", duty=0.25, bandwidth=B)
        w2 = make_workload("w2", duty=0.25, bandwidth=B)
        placement, _ = setup([w1, w2], cluster)
        placement.place(w1.jobs[0].tasks[0], "n0")
        result = score(w2.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
        assert result.score == 100.0 and not result.early_return
        assert result.indices == {"w2-j": 36}

    def test_full_overload_scores_zero(self):
        cluster = make_cluster(nodes=1)
        w1 = make_workload("w1", duty=1.0, bandwidth=B)
        w2 = make_workload("w2", duty=1.0, bandwidth=B)
        placement, _ = setup([w1, w2], cluster)
        placement.place(w1.jobs[0].tasks[0], "n0")
        result = score(w2.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
        assert result.score == pytest.approx(0.0, abs=1e-9)

    def test_score_within_bounds_and_perfect_iff_no_excess(self):
        for d2 in (0.2, 0.5, 0.7, 0.9):
            cluster = make_cluster(nodes=1)
            w1 = make_workload("w1", duty=0.4, bandwidth=B)
            w2 = make_workload(f"w2", duty=d2, bandwidth=B)
            placement, _ = setup([w1, w2], cluster)
            placement.place(w1.jobs[0].tasks[0], "n0")
            result = score(w2.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
            assert 0.0 <= result.score <= 100.0
            assert (result.score == 100.0) == (0.4 + d2 <= 1.0 + 1e-12)


class TestNormalizeAndSelect:
    def pod(self, low_comm=False):
        return make_task("p", "pj", "pw", low_comm=low_comm)

    def test_unique_max_short_circuits(self):
        cache = LatencyScoreCache("p", {"n0": 10.0, "n1": 1.0})
        assert normalize_and_select({"n0": 100.0, "n1": 90.0}, cache, self.pod()) == "n0"

    def test_latency_breaks_ties(self):
        cache = LatencyScoreCache("p", {"n0": 10.0, "n1": 20.0, "n2": 30.0})
        scores = {"n0": 100.0, "n1": 100.0, "n2": 100.0}
        assert normalize_and_select(scores, cache, self.pod()) == "n0"

    def test_equal_latency_tie_breaks_by_node_id(self):
        cache = LatencyScoreCache("p", {"n0": 7.0, "n1": 7.0})
        scores = {"n1": 100.0, "n0": 100.0}
        assert normalize_and_select(scores, cache, self.pod()) == "n0"

    def test_low_comm_prefers_worst_network(self):
        cache = LatencyScoreCache("p", {"n0": 10.0, "n1": 30.0})
        scores = {"n0": 100.0, "n1": 100.0}
        assert normalize_and_select(scores, cache, self.pod(low_comm=True)) == "n1"


class TestReserve:
    def test_shift_formula(self):
        cluster = make_cluster(nodes=1, bandwidth=B)
        w1 = make_workload("w1", period=0.4, duty=0.25, bandwidth=B)
        w2 = make_workload("w2", period=0.4, duty=0.25, bandwidth=B)
        placement, _ = setup([w1, w2], cluster)
        placement.place(w1.jobs[0].tasks[0], "n0")
        result = score(w2.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
        outcome = reserve(w2.jobs[0].tasks[0], "n0", result, placement)
        scheme = outcome.scheme
        assert scheme is not None
        idx = scheme.indices["w2-j-t0"]
        assert scheme.time_shifts["w2-j-t0"] == pytest.approx(idx / 72 * 0.4)
        # index 18 at di_pre 72 and period 0.4 s -> 0.1 s
        assert (18 / 72) * 0.4 == pytest.approx(0.1)

    def test_skip_cases(self):
        cluster = make_cluster(nodes=2, bandwidth=B)
        w1 = make_workload("w1", bandwidth=B, duty=0.25)
        w2 = make_workload("w2", bandwidth=B, duty=0.25)
        placement, _ = setup([w1, w2], cluster)
        # early return on an empty node -> skip, no shifts
        r1 = score(w1.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
        o1 = reserve(w1.jobs[0].tasks[0], "n0", r1, placement)
        assert o1.early_return and o1.skip_phase_three and o1.scheme is None
        # sharing set reaches exactly two pods -> skip even though scored
        r2 = score(w2.jobs[0].tasks[0], "n0", placement, cluster, PARAMS)
        o2 = reserve(w2.jobs[0].tasks[0], "n0", r2, placement)
        assert not o2.early_return and o2.skip_phase_three
        assert len(o2.sharing_set) == 2


class TestGang:
    def test_rejection_rolls_back(self):
        cluster = make_cluster(nodes=2, gpu=1)
        w = make_workload("w1", tasks=3)
        placement, _ = setup([w], cluster)
        before_assign = dict(placement.assignments)
        before_free = {n: dict(r) for n, r in placement.free.items()}
        with pytest.raises(JobRejected):
            schedule_job(w.jobs[0], placement, cluster, PARAMS)
        assert placement.assignments == before_assign
        assert placement.free == before_free

    def test_both_tasks_placed(self):
        cluster = make_cluster(nodes=2, gpu=1)
        w = make_workload("w1", tasks=2)
        placement, _ = setup([w], cluster)
        outcomes = schedule_job(w.jobs[0], placement, cluster, PARAMS)
        assert len(outcomes) == 2
        assert placement.job_deployed("w1-j")

    def test_workload_flag_zero_when_second_job_rejected(self):
        from tdmsched.model import JobSpec, WorkloadSpec

        cluster = make_cluster(nodes=1, gpu=2)
        tasks1 = tuple(make_task(f"a{k}", "j1", "w1", gpu=1.0) for k in range(2))
        tasks2 = tuple(make_task(f"b{k}", "j2", "w1", gpu=1.0) for k in range(2))
        w = WorkloadSpec(
            id="w1",
            jobs=(
                JobSpec(id="j1", workload_id="w1", priority=Priority.LOW, tasks=tasks1),
                JobSpec(id="j2", workload_id="w1", priority=Priority.LOW, tasks=tasks2),
            ),
        )
        placement, _ = setup([w], cluster)
        schedule_job(w.jobs[0], placement, cluster, PARAMS)
        with pytest.raises(JobRejected):
            schedule_job(w.jobs[1], placement, cluster, PARAMS)
        d_w, d_j = placement.deployment_flags()
        assert d_j["j1"] == 1 and d_j["j2"] == 0 and d_w["w1"] == 0


class TestSchemeInvariants:
    def test_same_job_tasks_share_rotation(self):
        cluster = make_cluster(nodes=1, gpu=4, bandwidth=B)
        w1 = make_workload("w1", duty=0.2, bandwidth=0.6 * B, tasks=2)
        w2 = make_workload("w2", duty=0.2, bandwidth=0.6 * B, tasks=2)
        placement, _ = setup([w1, w2], cluster)
        schedule_job(w1.jobs[0], placement, cluster, PARAMS)
        outcomes = schedule_job(w2.jobs[0], placement, cluster, PARAMS)
        scheme = outcomes[-1].scheme
        assert scheme is not None
        assert scheme.indices["w2-j-t0"] == scheme.indices["w2-j-t1"]
        assert scheme.indices["w1-j-t0"] == scheme.indices["w1-j-t1"] == 0

    def test_rotation_ranges_respected(self):
        cluster = make_cluster(nodes=1, bandwidth=B)
        w1 = make_workload("w1", period=0.1, duty=0.3, bandwidth=B)
        w2 = make_workload("w2", period=0.2, duty=0.3, bandwidth=B)
        placement, _ = setup([w1, w2], cluster)
        schedule_job(w1.jobs[0], placement, cluster, PARAMS)
        outcomes = schedule_job(w2.jobs[0], placement, cluster, PARAMS)
        scheme = outcomes[0].scheme
        assert scheme is not None
        for tid, idx in scheme.indices.items():
            mul = scheme.fits[tid].mul
            assert 0 <= idx < math.ceil(72 / mul)

    def test_determinism(self):
        def run_once():
            from conftest import reset_orders

            reset_orders()
            cluster = make_cluster(nodes=3, bandwidth=B)
            wls = [make_workload(f"w{i}", duty=0.3, bandwidth=B) for i in range(3)]
            placement, _ = setup(wls, cluster)
            out = []
            for w in wls:
                out.extend(schedule_job(w.jobs[0], placement, cluster, PARAMS))
            return [(o.task_id, o.node, o.score, o.skip_phase_three) for o in out]

        assert run_once() == run_once()
