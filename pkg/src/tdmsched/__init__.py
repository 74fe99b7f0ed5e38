"""TDM-based network- and priority-aware scheduling of periodic-traffic jobs.

Library layout:

- model: cluster/workload domain types and placement bookkeeping
- geometry: unified-circle traffic abstraction and demand profiles
- metrics: the three staged objectives and link utilization
- scheduler: the five-phase per-task pipeline with gang admission
- controller: global offsets, offline recalculation, stop-and-wait regulation
- simulator: discrete-event execution with fair-share link contention
- tracegen: synthetic arrival traces
- oracle: brute-force reference for the full three-stage optimization
- pipeline: one-shot snapshot scheduling plus exact evaluation
- cli: command-line wiring
"""

from .errors import (
    ConfigError,
    CycleDetected,
    EmptySet,
    IncompatiblePeriods,
    InfeasibleLoad,
    InstanceTooLarge,
    InsufficientResources,
    JobRejected,
    NoContendingPairs,
    NoFeasibleNode,
    TdmschedError,
    UnplacedTask,
)
from .model import (
    ClusterSpec,
    JobSpec,
    NodeSpec,
    Placement,
    Priority,
    TaskSpec,
    WorkloadIndex,
    WorkloadSpec,
    apply_placement,
    highest_priority_task,
)

__version__ = "0.1.0"
