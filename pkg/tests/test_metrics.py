"""Objectives: link utilization, average bandwidth utilization, latency, cushion."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdmsched.errors import NoContendingPairs, UnplacedTask
from tdmsched.geometry import abstract, demand_profile, unify_periods
from tdmsched.metrics import (
    ObjectiveVector,
    avg_bw_utilization,
    link_utilization,
    min_comm_interval,
    total_latency,
    workload_latency,
)
from tdmsched.model import Placement, Priority, WorkloadIndex

from conftest import make_cluster, make_task, make_workload

B = 10e9


def lone(tid, **kw):
    return make_task(tid, f"{tid}-job", "w", **kw)


def profile_for(specs, rotations=None):
    """specs: list of (task, bandwidth); tasks unified, rotations applied."""
    rotations = rotations or {}
    tasks = [t for t, _ in specs]
    u = unify_periods(tasks, 0.005, 0.1)
    abstractions = [abstract(t, u, rotation=rotations.get(t.id, 0.0)) for t in tasks]
    return demand_profile(abstractions, {t.id: bw for t, bw in specs})


class TestLinkUtilization:
    def test_single_half_duty(self):
        p = profile_for([(lone("a", duty=0.5), B)])
        assert link_utilization(p, B) == pytest.approx(0.5, abs=1e-12)

    def test_interleaved_full_cover(self):
        p = profile_for(
            [(lone("a", duty=0.5), B), (lone("b", duty=0.5), B)],
            rotations={"b": math.pi},
        )
        assert link_utilization(p, B) == pytest.approx(1.0, abs=1e-12)

    def test_aligned_clipped(self):
        p = profile_for([(lone("a", duty=0.5), B), (lone("b", duty=0.5), B)])
        assert link_utilization(p, B) == pytest.approx(0.5, abs=1e-12)

    def test_clipping_strictly_below_unclipped_mass(self):
        p = profile_for([(lone("a", duty=0.4), B), (lone("b", duty=0.4), 0.8 * B)])
        mass = 0.4 + 0.4 * 0.8
        assert link_utilization(p, B) < mass - 1e-9

    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    @settings(max_examples=60, deadline=None)
    def test_bounds(self, d1, d2):
        p = profile_for([(lone("a", duty=d1), B), (lone("b", duty=d2), B)])
        xi = link_utilization(p, B)
        assert 0.0 <= xi <= 1.0 + 1e-12


class TestAvgBwUtilization:
    def test_single_link(self):
        assert avg_bw_utilization([(0.5, B)], b_max=B) == pytest.approx(0.5)

    def test_heterogeneous_links(self):
        # 25 and 10 Gb/s links both saturated
        value = avg_bw_utilization([(1.0, 25e9), (1.0, 10e9)], b_max=25e9)
        assert value == pytest.approx(0.7, abs=1e-12)

    def test_empty_demand(self):
        assert avg_bw_utilization([(0.0, B), (0.0, B)], b_max=B) == 0.0

    def test_monotone_in_xi(self):
        lo = avg_bw_utilization([(0.2, B), (0.5, B)], b_max=B)
        hi = avg_bw_utilization([(0.3, B), (0.5, B)], b_max=B)
        assert hi > lo


class TestWorkloadLatency:
    def place(self, workload, mapping, cluster):
        placement = Placement(cluster=cluster, index=WorkloadIndex([workload]))
        for tid, node in mapping.items():
            placement.place(placement.index.task_by_id[tid], node)
        return placement

    def test_colocated_pair(self):
        cluster = make_cluster(nodes=2)
        w = make_workload("w1", tasks=2)
        placement = self.place(w, {"w1-j-t0": "n0", "w1-j-t1": "n0"}, cluster)
        assert workload_latency(placement, w, cluster) == pytest.approx(4.0)

    def test_split_pair(self):
        cluster = make_cluster(nodes=2, off_diagonal=5.0)
        w = make_workload("w1", tasks=2)
        placement = self.place(w, {"w1-j-t0": "n0", "w1-j-t1": "n1"}, cluster)
        # self pairs 1 + 1 plus the cross pair 5
        assert workload_latency(placement, w, cluster) == pytest.approx(7.0)

    def test_dependent_jobs(self):
        from tdmsched.model import JobSpec, WorkloadSpec

        cluster = make_cluster(nodes=2, off_diagonal=3.0)
        t_a = make_task("ta", "ja", "w1")
        t_b = make_task("tb", "jb", "w1")
        w = WorkloadSpec(
            id="w1",
            jobs=(
                JobSpec(id="ja", workload_id="w1", priority=Priority.LOW, tasks=(t_a,)),
                JobSpec(id="jb", workload_id="w1", priority=Priority.LOW, tasks=(t_b,)),
            ),
            dependencies=(("ja", "jb"),),
        )
        placement = self.place(w, {"ta": "n0", "tb": "n1"}, cluster)
        assert workload_latency(placement, w, cluster) == pytest.approx(3.0 + 1.0 + 1.0)

    def test_unplaced_task_raises(self):
        cluster = make_cluster(nodes=2)
        w = make_workload("w1", tasks=2)
        placement = self.place(w, {"w1-j-t0": "n0"}, cluster)
        with pytest.raises(UnplacedTask):
            workload_latency(placement, w, cluster)

    def test_relabeling_invariance(self):
        w = make_workload("w1", tasks=2)
        base = make_cluster(nodes=2, off_diagonal=4.0)
        swapped = make_cluster(nodes=2, off_diagonal=4.0)
        p1 = self.place(w, {"w1-j-t0": "n0", "w1-j-t1": "n1"}, base)
        p2 = self.place(w, {"w1-j-t0": "n1", "w1-j-t1": "n0"}, swapped)
        assert workload_latency(p1, w, base) == pytest.approx(workload_latency(p2, w, swapped))

    def test_total_latency_sums_deployed(self):
        cluster = make_cluster(nodes=2)
        w1, w2 = make_workload("w1", tasks=1), make_workload("w2", tasks=2)
        placement = Placement(cluster=cluster, index=WorkloadIndex([w1, w2]))
        placement.place(placement.index.task_by_id["w1-j-t0"], "n0")
        assert total_latency(placement, [w1, w2], cluster) == pytest.approx(1.0)
        placement.place(placement.index.task_by_id["w2-j-t0"], "n0")
        placement.place(placement.index.task_by_id["w2-j-t1"], "n0")
        assert total_latency(placement, [w1, w2], cluster) == pytest.approx(1.0 + 4.0)
        assert total_latency(placement, [], cluster) == 0.0


class TestMinCommInterval:
    def build(self, duties, rotations, rates):
        tasks = [lone(f"t{i}", duty=d, bandwidth=r) for i, (d, r) in enumerate(zip(duties, rates))]
        u = unify_periods(tasks, 0.005, 0.1)
        abstractions = {
            t.id: abstract(t, u, rotation=rotations[i]) for i, t in enumerate(tasks)
        }
        return abstractions, tasks

    def test_opposed_rotations(self):
        abstractions, tasks = self.build([0.25, 0.25], [0.0, math.pi], [B, B])
        assert min_comm_interval(abstractions, tasks, B) == pytest.approx(math.pi)

    def test_quarter_offset(self):
        abstractions, tasks = self.build([0.25, 0.25], [0.0, math.pi / 2], [B, B])
        assert min_comm_interval(abstractions, tasks, B) == pytest.approx(math.pi / 2)

    def test_no_contending_pairs(self):
        abstractions, tasks = self.build([0.25, 0.25], [0.0, math.pi], [0.4 * B, 0.4 * B])
        with pytest.raises(NoContendingPairs):
            min_comm_interval(abstractions, tasks, B)


class TestObjectiveVector:
    def test_lexicographic_order(self):
        base = ObjectiveVector(gamma=0.5, latency=10.0, psi=1.0)
        assert ObjectiveVector(0.6, 99.0, 0.1).better_than(base)
        assert ObjectiveVector(0.5, 9.0, 0.1).better_than(base)
        assert ObjectiveVector(0.5, 10.0, 2.0).better_than(base)
        assert not ObjectiveVector(0.4, 0.0, math.pi).better_than(base)
        assert ObjectiveVector(0.5, 10.0, None).better_than(base)
