"""Shared builders for cluster and workload fixtures."""

from __future__ import annotations

import itertools
from typing import Optional, Sequence, Tuple

import pytest

from tdmsched.model import ClusterSpec, JobSpec, NodeSpec, Priority, TaskSpec, WorkloadSpec

_counter = itertools.count(1)


def reset_orders() -> None:
    global _counter
    _counter = itertools.count(1)


def make_task(
    tid: str,
    job_id: str,
    workload_id: str,
    period: Optional[float] = 0.1,
    duty: Optional[float] = 0.5,
    bandwidth: Optional[float] = 10e9,
    priority: Priority = Priority.LOW,
    low_comm: bool = False,
    gpu: float = 1.0,
    cpu: float = 1.0,
    mem: float = 1e9,
    submit_order: Optional[int] = None,
) -> TaskSpec:
    return TaskSpec(
        id=tid,
        job_id=job_id,
        workload_id=workload_id,
        cpu=cpu,
        mem=mem,
        gpu=gpu,
        priority=priority,
        submit_order=next(_counter) if submit_order is None else submit_order,
        low_comm=low_comm,
        period=None if low_comm else period,
        duty_cycle=None if low_comm else duty,
        bandwidth=None if low_comm else bandwidth,
    )


def make_workload(
    wid: str,
    period: Optional[float] = 0.1,
    duty: Optional[float] = 0.5,
    bandwidth: Optional[float] = 10e9,
    priority: Priority = Priority.LOW,
    tasks: int = 1,
    low_comm: bool = False,
    gpu: float = 1.0,
) -> WorkloadSpec:
    jid = f"{wid}-j"
    specs = tuple(
        make_task(
            f"{jid}-t{k}", jid, wid,
            period=period, duty=duty, bandwidth=bandwidth,
            priority=priority, low_comm=low_comm, gpu=gpu,
        )
        for k in range(tasks)
    )
    return WorkloadSpec(id=wid, jobs=(JobSpec(id=jid, workload_id=wid, priority=priority, tasks=specs),))


def make_cluster(
    nodes: int = 2,
    gpu: float = 4.0,
    bandwidth: float = 10e9,
    cpu: float = 64.0,
    mem: float = 64e9,
    latency: Optional[Sequence[Sequence[float]]] = None,
    off_diagonal: float = 2.0,
) -> ClusterSpec:
    specs = tuple(
        NodeSpec(id=f"n{i}", cpu=cpu, mem=mem, gpu=gpu, link_bandwidth=bandwidth)
        for i in range(nodes)
    )
    if latency is None:
        latency = [
            [1.0 if i == j else off_diagonal for j in range(nodes)] for i in range(nodes)
        ]
    return ClusterSpec(nodes=specs, latency=tuple(tuple(float(x) for x in row) for row in latency))


@pytest.fixture(autouse=True)
def _fresh_submit_orders():
    reset_orders()
    yield
