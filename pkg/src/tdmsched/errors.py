"""Exception types shared across the package."""

from __future__ import annotations


class TdmschedError(Exception):
    """Base class for all package errors."""


class ConfigError(TdmschedError):
    """A config file or parameter set is inconsistent or malformed."""


class InsufficientResources(TdmschedError):
    """Placing a task would drive a node resource residual negative."""


class EmptySet(TdmschedError):
    """An operation that needs a nonempty collection received an empty one."""


class IncompatiblePeriods(TdmschedError):
    """No multiplicity assignment aligns the task periods within tolerance."""


class NoFeasibleNode(TdmschedError):
    """Every candidate node was filtered out for the pod being scheduled."""


class JobRejected(TdmschedError):
    """Gang admission failed; all tentative placements were rolled back."""

    def __init__(self, job_id: str, task_id: str, phase: str, reason: str):
        super().__init__(f"job {job_id} rejected at {phase} for task {task_id}: {reason}")
        self.job_id = job_id
        self.task_id = task_id
        self.phase = phase
        self.reason = reason


class NoContendingPairs(TdmschedError):
    """No pair of tasks on the link meets the contention predicate."""


class UnplacedTask(TdmschedError):
    """A latency query touched a task that has not been placed."""


class CycleDetected(TdmschedError):
    """The affinity graph contains a cycle (should be prevented upstream)."""


class InstanceTooLarge(TdmschedError):
    """The instance exceeds the enumeration bounds of the brute-force solver."""


class InfeasibleLoad(TdmschedError):
    """The trace generator cannot reach the requested load on this cluster."""
