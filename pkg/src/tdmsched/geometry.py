"""Circle abstraction of periodic traffic patterns.

Tasks sharing a link are mapped onto one circle whose perimeter is the
common (LCM-like) period.  Each task repeats `mul` times around the circle;
each repetition spends an angle `alpha` communicating.  Rotating a task's
pattern shifts where its communication falls, which is how interleaving is
expressed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import IncompatiblePeriods
from .model import TaskSpec, highest_priority_task

TWO_PI = 2.0 * math.pi
_REL_TOL = 1e-9


@dataclass(frozen=True)
class PeriodFit:
    """How one task maps onto the unified circle."""

    mul: int
    injected_idle: float  # idle added to one repetition's computation phase
    effective_period: float  # t_l / mul, exactly

    @property
    def duty_scale_base(self) -> float:
        return self.effective_period


@dataclass(frozen=True)
class UnifiedPeriod:
    """Common circle period plus each participant's fit."""

    t_l: float
    fits: Mapping[str, PeriodFit]
    compatible: bool = True

    def fit(self, task_id: str) -> PeriodFit:
        return self.fits[task_id]


def _candidate_muls(anchor: float, period: float) -> List[int]:
    lo = max(1, math.floor(anchor / period))
    hi = max(1, math.ceil(anchor / period))
    return [lo] if lo == hi else [lo, hi]


def unify_periods(
    tasks: Sequence[TaskSpec],
    g_t: float,
    e_t: float,
    max_multiple: int = 64,
) -> UnifiedPeriod:
    """Choose multiplicities and a common circle period for `tasks`.

    If all candidate circle lengths (mul * period) agree pairwise within
    g_t the common period is their average.  Otherwise the circle is
    anchored on the highest-priority task and every other task is stretched
    by injecting idle time into its computation phase, which is only legal
    up to an e_t fraction of that task's own period.  Among feasible
    assignments the smallest circle wins.

    Raises IncompatiblePeriods when no assignment with t_l up to
    max_multiple times the longest period works.
    """
    if not tasks:
        raise ValueError("unify_periods needs at least one task")
    if g_t <= 0 or not (0.0 < e_t < 1.0):
        raise ValueError("need g_t > 0 and 0 < e_t < 1")
    for t in tasks:
        if t.low_comm or t.period is None:
            raise ValueError(f"task {t.id} has no declared period")

    ref = highest_priority_task(tasks)
    others = [t for t in tasks if t.id != ref.id]
    t_max = max(t.period for t in tasks)
    limit = max_multiple * t_max * (1.0 + 1e-12)

    best: Optional[Tuple[float, int, Dict[str, PeriodFit]]] = None
    k = 1
    while k * ref.period <= limit:
        anchor = k * ref.period
        option_sets = [_candidate_muls(anchor, t.period) for t in others]
        for combo in itertools.product(*option_sets):
            muls = {ref.id: k}
            for t, m in zip(others, combo):
                muls[t.id] = m
            lengths = {t.id: muls[t.id] * t.period for t in tasks}
            values = list(lengths.values())
            spread = max(values) - min(values)
            fits: Dict[str, PeriodFit] = {}
            if spread <= g_t * (1.0 + 1e-12):
                t_l = sum(values) / len(values)
                for t in tasks:
                    fits[t.id] = PeriodFit(muls[t.id], 0.0, t_l / muls[t.id])
            else:
                t_l = anchor
                ok = True
                for t in others:
                    if abs(lengths[t.id] - t_l) <= g_t * (1.0 + 1e-12):
                        fits[t.id] = PeriodFit(muls[t.id], 0.0, t_l / muls[t.id])
                        continue
                    idle = t_l / muls[t.id] - t.period
                    if idle <= 0 or idle > e_t * t.period * (1.0 + 1e-12):
                        ok = False
                        break
                    fits[t.id] = PeriodFit(muls[t.id], idle, t_l / muls[t.id])
                if not ok:
                    continue
                fits[ref.id] = PeriodFit(k, 0.0, t_l / k)
            if t_l > limit:
                continue
            if best is None or t_l < best[0] * (1.0 - _REL_TOL):
                best = (t_l, k, fits)
        k += 1

    if best is None:
        raise IncompatiblePeriods(
            f"periods {[t.period for t in tasks]} cannot be aligned within "
            f"g_t={g_t}, e_t={e_t} at <= {max_multiple}x the longest period"
        )
    t_l, _, fits = best
    return UnifiedPeriod(t_l=t_l, fits=fits, compatible=True)


def unify_periods_bounded(
    tasks: Sequence[TaskSpec],
    g_t: float,
    e_t: float,
    max_multiple: int = 64,
) -> UnifiedPeriod:
    """unify_periods with a best-effort fallback instead of an error.

    The fallback anchors the circle on the highest-priority task with the
    multiplicity (up to the 64x bound) minimizing the worst relative
    per-repetition mismatch; the result is flagged `compatible=False`.
    """
    try:
        return unify_periods(tasks, g_t, e_t, max_multiple)
    except IncompatiblePeriods:
        pass
    ref = highest_priority_task(tasks)
    others = [t for t in tasks if t.id != ref.id]
    t_max = max(t.period for t in tasks)
    best: Optional[Tuple[float, float, int, Dict[str, int]]] = None
    k = 1
    while k * ref.period <= max_multiple * t_max * (1.0 + 1e-12):
        anchor = k * ref.period
        muls = {ref.id: k}
        err = 0.0
        for t in others:
            m = max(1, round(anchor / t.period))
            muls[t.id] = m
            err = max(err, abs(anchor / m - t.period) / t.period)
        if best is None or err < best[0] - 1e-15:
            best = (err, anchor, k, muls)
        k += 1
    assert best is not None
    _, t_l, _, muls = best
    fits = {t.id: PeriodFit(muls[t.id], 0.0, t_l / muls[t.id]) for t in tasks}
    return UnifiedPeriod(t_l=t_l, fits=fits, compatible=False)


@dataclass(frozen=True)
class CircleAbstraction:
    """A task's traffic pattern on the unified circle.

    `intervals` are the unrotated communication spans; `rotation` is the
    phase offset applied on top (kept within [0, 2*pi/mul)).
    """

    task_id: str
    mul: int
    alpha: float
    intervals: Tuple[Tuple[float, float], ...]
    rotation: float = 0.0

    def with_rotation(self, rotation: float) -> "CircleAbstraction":
        period_angle = TWO_PI / self.mul
        rot = rotation % period_angle
        return CircleAbstraction(self.task_id, self.mul, self.alpha, self.intervals, rot)

    def rotated_intervals(self) -> Tuple[Tuple[float, float], ...]:
        return tuple((s + self.rotation, e + self.rotation) for s, e in self.intervals)

    def rotated_segments(self) -> List[Tuple[float, float]]:
        """Rotated spans wrapped into [0, 2*pi); may split one interval in two."""
        segments: List[Tuple[float, float]] = []
        for s, e in self.intervals:
            if e - s <= 0:
                continue
            start = (s + self.rotation) % TWO_PI
            end = start + (e - s)
            if end <= TWO_PI + 1e-15:
                segments.append((start, min(end, TWO_PI)))
            else:
                segments.append((start, TWO_PI))
                segments.append((0.0, end - TWO_PI))
        return segments


def abstract(task: TaskSpec, unified: UnifiedPeriod, rotation: float = 0.0) -> CircleAbstraction:
    """Build the circle abstraction of `task` under `unified`.

    The absolute communication duration per iteration is preserved; any
    injected idle extends the computation phase and therefore lowers the
    duty cycle used for the angle computation.
    """
    if task.id not in unified.fits:
        raise KeyError(f"task {task.id} does not participate in the unified period")
    fit = unified.fit(task.id)
    duty = task.comm_duration / fit.effective_period
    alpha = (TWO_PI / fit.mul) * duty
    intervals = tuple(
        (TWO_PI * i / fit.mul, TWO_PI * i / fit.mul + alpha) for i in range(fit.mul)
    )
    abstraction = CircleAbstraction(task.id, fit.mul, alpha, intervals)
    if rotation:
        abstraction = abstraction.with_rotation(rotation)
    return abstraction


@dataclass(frozen=True)
class AngularProfile:
    """Exact piecewise-constant aggregate demand around the circle.

    bounds has length n+1 with bounds[0] == 0 and bounds[-1] == 2*pi;
    values[i] holds on [bounds[i], bounds[i+1]).
    """

    bounds: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        widths = np.diff(self.bounds)
        return float(np.dot(widths, self.values))

    def clipped_integral(self, cap: float) -> float:
        widths = np.diff(self.bounds)
        return float(np.dot(widths, np.minimum(self.values, cap)))

    def value_at(self, theta: float) -> float:
        theta = theta % TWO_PI
        idx = int(np.searchsorted(self.bounds, theta, side="right")) - 1
        idx = min(max(idx, 0), len(self.values) - 1)
        return float(self.values[idx])

    def range_means(self, count: int) -> np.ndarray:
        """Mean demand over `count` equal angular ranges; exact."""
        cum = np.concatenate(([0.0], np.cumsum(np.diff(self.bounds) * self.values)))

        def integral_to(theta: np.ndarray) -> np.ndarray:
            idx = np.clip(np.searchsorted(self.bounds, theta, side="right") - 1, 0, len(self.values) - 1)
            return cum[idx] + (theta - self.bounds[idx]) * self.values[idx]

        edges = np.linspace(0.0, TWO_PI, count + 1)
        totals = integral_to(edges)
        width = TWO_PI / count
        return np.diff(totals) / width


def demand_profile(
    abstractions: Sequence[CircleAbstraction],
    bandwidths: Mapping[str, float],
) -> AngularProfile:
    """Superpose rotated patterns into the exact aggregate-demand profile."""
    starts: List[float] = []
    ends: List[float] = []
    rates: List[float] = []
    for ab in abstractions:
        rate = bandwidths[ab.task_id]
        for s, e in ab.rotated_segments():
            starts.append(s)
            ends.append(e)
            rates.append(rate)
    points = np.unique(np.concatenate((np.array([0.0, TWO_PI]), np.array(starts), np.array(ends))))
    points = points[(points >= 0.0) & (points <= TWO_PI)]
    bounds = points
    if len(starts) == 0:
        return AngularProfile(bounds=np.array([0.0, TWO_PI]), values=np.zeros(1))
    mids = (bounds[:-1] + bounds[1:]) / 2.0
    s_arr = np.array(starts)
    e_arr = np.array(ends)
    r_arr = np.array(rates)
    inside = (mids[:, None] >= s_arr[None, :]) & (mids[:, None] < e_arr[None, :])
    values = inside @ r_arr
    return AngularProfile(bounds=bounds, values=values)


def interval_midpoint(interval: Tuple[float, float]) -> float:
    return ((interval[0] + interval[1]) / 2.0) % TWO_PI


def circular_distance(phi: float, psi: float) -> float:
    d = abs(phi - psi) % TWO_PI
    return min(d, TWO_PI - d)


def interval_distance(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Circular distance between interval midpoints; result in [0, pi]."""
    if a[1] < a[0] or b[1] < b[0]:
        raise ValueError("intervals must satisfy start <= end")
    return circular_distance(interval_midpoint(a), interval_midpoint(b))
