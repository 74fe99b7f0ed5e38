"""Config-file ingestion: cluster, workloads, traces (JSON or YAML).

The cluster file mirrors the node-bandwidth and network-topology resources
(nodes, capacities, latency matrix); the workload file mirrors the
app-group and pod-bandwidth resources (workloads -> jobs -> tasks with
`period`, `duty_cycle`, `bandwidth`, `low_comm`).  Submit order is assigned
in file order at load time and acts as the sole tie-breaker.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence

import yaml

from .errors import ConfigError
from .model import ClusterSpec, JobSpec, NodeSpec, Priority, TaskSpec, WorkloadSpec


def load_document(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    suffix = Path(path).suffix.lower()
    try:
        if suffix in (".yaml", ".yml"):
            return yaml.safe_load(text)
        if suffix == ".json":
            return json.loads(text)
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc


def dump_json(payload: Any, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def parse_cluster(doc: Mapping[str, Any]) -> ClusterSpec:
    try:
        raw_nodes = doc["nodes"]
    except (KeyError, TypeError):
        raise ConfigError("cluster file needs a 'nodes' list")
    nodes = []
    for entry in raw_nodes:
        nodes.append(
            NodeSpec(
                id=str(entry["id"]),
                cpu=float(entry["cpu"]),
                mem=float(entry["mem"]),
                gpu=float(entry["gpu"]),
                link_bandwidth=float(entry["bandwidth"]),
            )
        )
    latency = doc.get("latency")
    if latency is None:
        latency = [[1.0 if i == j else 2.0 for j in range(len(nodes))] for i in range(len(nodes))]
    matrix = tuple(tuple(float(x) for x in row) for row in latency)
    return ClusterSpec(nodes=tuple(nodes), latency=matrix)


def load_cluster(path: str | Path) -> ClusterSpec:
    return parse_cluster(load_document(path))


def parse_workloads(doc: Mapping[str, Any]) -> List[WorkloadSpec]:
    try:
        raw = doc["workloads"]
    except (KeyError, TypeError):
        raise ConfigError("workload file needs a 'workloads' list")
    order = 0
    workloads: List[WorkloadSpec] = []
    for w in raw:
        wid = str(w["id"])
        jobs: List[JobSpec] = []
        for j in w["jobs"]:
            jid = str(j["id"])
            priority = Priority.parse(j.get("priority", "low"))
            tasks: List[TaskSpec] = []
            for k, t in enumerate(j["tasks"]):
                order += 1
                low_comm = bool(t.get("low_comm", False))
                tasks.append(
                    TaskSpec(
                        id=str(t.get("id", f"{jid}-t{k}")),
                        job_id=jid,
                        workload_id=wid,
                        cpu=float(t.get("cpu", 1.0)),
                        mem=float(t.get("mem", 1.0)),
                        gpu=float(t.get("gpu", 1.0)),
                        priority=priority,
                        submit_order=order,
                        low_comm=low_comm,
                        period=None if low_comm else float(t["period"]),
                        duty_cycle=None if low_comm else float(t["duty_cycle"]),
                        bandwidth=None if low_comm else float(t["bandwidth"]),
                    )
                )
            jobs.append(JobSpec(id=jid, workload_id=wid, priority=priority, tasks=tuple(tasks)))
        deps = tuple((str(a), str(b)) for a, b in w.get("dependencies", []))
        workloads.append(WorkloadSpec(id=wid, jobs=tuple(jobs), dependencies=deps))
    return workloads


def load_workloads(path: str | Path) -> List[WorkloadSpec]:
    return parse_workloads(load_document(path))


def renumber_submit_orders(workloads: Sequence[WorkloadSpec], start: int = 1) -> List[WorkloadSpec]:
    """Reassign globally unique submit orders in listing order.

    Needed when workloads parsed from separate documents are combined;
    submit_order is the sole tie-breaker and must never repeat.
    """
    from dataclasses import replace

    order = start
    out: List[WorkloadSpec] = []
    for w in workloads:
        jobs = []
        for j in w.jobs:
            tasks = []
            for t in j.tasks:
                tasks.append(replace(t, submit_order=order))
                order += 1
            jobs.append(replace(j, tasks=tuple(tasks)))
        out.append(replace(w, jobs=tuple(jobs)))
    return out


def workloads_to_doc(workloads: Sequence[WorkloadSpec]) -> Dict[str, Any]:
    out: List[Dict[str, Any]] = []
    for w in workloads:
        jobs = []
        for j in w.jobs:
            tasks = []
            for t in j.tasks:
                entry: Dict[str, Any] = {
                    "id": t.id,
                    "cpu": t.cpu,
                    "mem": t.mem,
                    "gpu": t.gpu,
                }
                if t.low_comm:
                    entry["low_comm"] = True
                else:
                    entry["period"] = t.period
                    entry["duty_cycle"] = t.duty_cycle
                    entry["bandwidth"] = t.bandwidth
                tasks.append(entry)
            jobs.append({"id": j.id, "priority": j.priority.value, "tasks": tasks})
        out.append({"id": w.id, "jobs": jobs, "dependencies": [list(d) for d in w.dependencies]})
    return {"workloads": out}


def cluster_to_doc(cluster: ClusterSpec) -> Dict[str, Any]:
    return {
        "nodes": [
            {"id": n.id, "cpu": n.cpu, "mem": n.mem, "gpu": n.gpu, "bandwidth": n.link_bandwidth}
            for n in cluster.nodes
        ],
        "latency": [list(row) for row in cluster.latency],
    }
