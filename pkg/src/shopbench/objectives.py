"""Scheduling metrics over finished or in-progress runs.

Everything here is a pure function of a ScheduleRecord, the flat summary
the simulation produces: completion times, per-operation start/duration,
machine interval logs, vehicle load logs and buffer occupancy series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import MetricUnavailable
from .notation import (Aggregation, MetricId, ObjectiveSpec, ParetoObjective,
                       ScalarizedObjective, SingleObjective)


@dataclass
class OpRecord:
    job_id: int
    op_index: int
    machine_id: int
    start: float
    duration: float  # realized clock-time occupancy

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class JobRecord:
    job_id: int
    release: float
    due: float | None
    total_processing: float  # sum of realized durations
    completion: float | None  # None while unfinished


@dataclass
class MachineRecord:
    machine_id: int
    busy: list[tuple[float, float]] = field(default_factory=list)
    setup: list[tuple[float, float]] = field(default_factory=list)
    down: list[tuple[float, float]] = field(default_factory=list)
    # step series of (time, queue length) changes, starting at (0, 0)
    buffer_series: list[tuple[float, int]] = field(default_factory=list)


@dataclass
class VehicleRecord:
    vehicle_id: int
    loaded: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class ScheduleRecord:
    jobs: list[JobRecord]
    ops: list[OpRecord]
    machines: list[MachineRecord]
    vehicles: list[VehicleRecord] = field(default_factory=list)
    sink_series: list[tuple[float, int]] = field(default_factory=list)
    horizon: float = 0.0

    def job(self, job_id: int) -> JobRecord:
        for j in self.jobs:
            if j.job_id == job_id:
                return j
        raise MetricUnavailable(f"no job {job_id} in record")


@dataclass(frozen=True)
class JobMetrics:
    flow: float | None
    idle: float | None
    lateness: float | None
    tardiness: float | None
    unit_cost: float | None
    earliness: float | None
    pending: bool


def job_metrics(rec: ScheduleRecord) -> dict[int, JobMetrics]:
    """Per-job flow, idle, lateness, tardiness, unit-cost and earliness.

    Unfinished jobs are marked pending; jobs without a due date get the
    lateness family left as None.
    """
    out = {}
    for j in rec.jobs:
        if j.completion is None:
            out[j.job_id] = JobMetrics(None, None, None, None, None, None, True)
            continue
        flow = j.completion - j.release
        idle = flow - j.total_processing
        if j.due is None:
            out[j.job_id] = JobMetrics(flow, idle, None, None, None, None, False)
            continue
        lateness = j.completion - j.due
        tardiness = max(0.0, lateness)
        unit = 1.0 if j.completion > j.due else 0.0
        earliness = abs(min(lateness, 0.0))
        out[j.job_id] = JobMetrics(flow, idle, lateness, tardiness, unit, earliness, False)
    return out


def makespan(rec: ScheduleRecord) -> float:
    if not rec.jobs:
        raise MetricUnavailable("no jobs in record")
    if any(j.completion is None for j in rec.jobs):
        raise MetricUnavailable("makespan needs every job finished")
    return max(j.completion for j in rec.jobs)


def throughput(rec: ScheduleRecord, t: float) -> dict[str, float]:
    """Jobs and operations finished by t, as rates."""
    if t <= 0:
        raise MetricUnavailable("throughput needs t > 0")
    jobs_done = sum(1 for j in rec.jobs if j.completion is not None and j.completion <= t)
    ops_done = sum(1 for o in rec.ops if o.end <= t)
    return {"jobs": jobs_done / t, "ops": ops_done / t}


def _series_time_average(series: list[tuple[float, int]], t: float) -> float:
    """Mean level of a right-continuous step series over [0, t]."""
    if t <= 0:
        return 0.0
    total = 0.0
    level = 0
    prev = 0.0
    for when, value in series:
        if when >= t:
            break
        total += level * (max(when, 0.0) - prev)
        prev = max(when, 0.0)
        level = value
    total += level * (t - prev)
    return total / t


def _interval_total(intervals: list[tuple[float, float]], t: float) -> float:
    return sum(max(0.0, min(e, t) - min(s, t)) for s, e in intervals)


@dataclass(frozen=True)
class MachineMetrics:
    utilization: float
    buffer_length_avg: float
    buffered_time: float
    setup_total: float


def resource_metrics(rec: ScheduleRecord, t: float,
                     exclude_down: bool = False) -> tuple[dict[int, MachineMetrics], float | None]:
    """Per-machine utilization/buffer metrics plus the fleet load share.

    Utilization counts realized durations of operations finished by t over
    elapsed time; `exclude_down` removes repair intervals from the
    denominator instead.
    """
    if t <= 0:
        raise MetricUnavailable("resource metrics need t > 0")
    per = {}
    for m in rec.machines:
        work = sum(o.duration for o in rec.ops
                   if o.machine_id == m.machine_id and o.end <= t)
        denom = t
        if exclude_down:
            denom = max(t - _interval_total(m.down, t), 1e-12)
        avg_len = _series_time_average(m.buffer_series, t)
        per[m.machine_id] = MachineMetrics(
            utilization=work / denom,
            buffer_length_avg=avg_len,
            buffered_time=avg_len * t,
            setup_total=_interval_total(m.setup, t),
        )
    fleet = None
    if rec.vehicles:
        loaded = sum(_interval_total(v.loaded, t) for v in rec.vehicles)
        fleet = loaded / (t * len(rec.vehicles))
    return per, fleet


def _aggregate(values: list[float], agg: Aggregation) -> float:
    if not values:
        raise MetricUnavailable("nothing to aggregate")
    if agg is Aggregation.AVE:
        return sum(values) / len(values)
    if agg is Aggregation.MAX:
        return max(values)
    if agg is Aggregation.SUM:
        return sum(values)
    return float(sum(1 for v in values if v > 0))  # count


def _job_values(rec: ScheduleRecord, metric: MetricId) -> list[float]:
    table = job_metrics(rec)
    attr = {
        MetricId.FLOW: "flow",
        MetricId.IDLE_JOB: "idle",
        MetricId.LATENESS: "lateness",
        MetricId.TARDINESS: "tardiness",
        MetricId.UNIT_COST: "unit_cost",
        MetricId.EARLINESS: "earliness",
    }[metric]
    values = []
    for job_id in sorted(table):
        jm = table[job_id]
        if jm.pending:
            continue
        v = getattr(jm, attr)
        if v is None:
            raise MetricUnavailable(
                f"{metric.name.lower()} needs a due date on job {job_id}")
        values.append(v)
    return values


def metric_value(rec: ScheduleRecord, single: SingleObjective, t: float) -> float:
    """One aggregated metric; raises MetricUnavailable when inputs are missing."""
    metric, agg = single.metric, single.aggregation
    if metric is MetricId.MAKESPAN:
        return makespan(rec)
    if metric is MetricId.THROUGHPUT_JOBS:
        return throughput(rec, t)["jobs"]
    if metric is MetricId.THROUGHPUT_OPS:
        return throughput(rec, t)["ops"]
    if metric in (MetricId.FLOW, MetricId.IDLE_JOB, MetricId.LATENESS,
                  MetricId.TARDINESS, MetricId.UNIT_COST, MetricId.EARLINESS):
        return _aggregate(_job_values(rec, metric), agg)
    per, fleet = resource_metrics(rec, t)
    order = sorted(per)
    if metric is MetricId.UTILIZATION_MACHINE:
        return _aggregate([per[i].utilization for i in order], agg)
    if metric is MetricId.UTILIZATION_TRANSPORT:
        if fleet is None:
            raise MetricUnavailable("transport utilization needs vehicles")
        return fleet
    if metric is MetricId.BUFFER_LENGTH:
        return _aggregate([per[i].buffer_length_avg for i in order], agg)
    if metric is MetricId.BUFFERED_TIME:
        return _aggregate([per[i].buffered_time for i in order], agg)
    if metric is MetricId.SETUP_TIME_TOTAL:
        values = [per[i].setup_total for i in order]
        return _aggregate(values, Aggregation.SUM if agg is Aggregation.AVE else agg)
    if metric is MetricId.INVENTORY_LEVEL:
        return _series_time_average(rec.sink_series, t)
    raise MetricUnavailable(f"no formula for {metric}")


def evaluate_objective(rec: ScheduleRecord, spec: ObjectiveSpec, t: float):
    """Scalar for single/scalarized objectives; tuple for a pareto set."""
    if isinstance(spec, SingleObjective):
        return metric_value(rec, spec, t)
    if isinstance(spec, ScalarizedObjective):
        return sum(w * metric_value(rec, m, t) for w, m in spec.terms)
    return tuple(metric_value(rec, m, t) for m in spec.members)


# ---------------------------------------------------------------------------
# dominance


def _dominates(a, b, signs) -> bool:
    not_worse = all(sa * va <= sa * vb for va, vb, sa in zip(a, b, signs))
    strictly = any(sa * va < sa * vb for va, vb, sa in zip(a, b, signs))
    return not_worse and strictly


def pareto_front(points: list[tuple], directions: list[str]) -> list[int]:
    """Indices of non-dominated points.

    `directions` holds "min" or "max" per dimension. Points are sorted on
    the first dimension so most dominated entries are rejected early;
    duplicates of a front member stay on the front.
    """
    if not points:
        return []
    dim = len(directions)
    for p in points:
        if len(p) != dim:
            raise ValueError(f"point {p!r} has {len(p)} dims, expected {dim}")
    signs = [1.0 if d == "min" else -1.0 for d in directions]

    order = sorted(range(len(points)),
                   key=lambda i: tuple(s * v for v, s in zip(points[i], signs)))
    front: list[int] = []
    for i in order:
        if not any(_dominates(points[k], points[i], signs) for k in front):
            front.append(i)
    return sorted(front)
