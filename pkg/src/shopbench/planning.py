"""Active-schedule construction for plan-following baselines.

The builder is the classic two-step conflict procedure: find the operation
/ machine pair that could finish earliest, collect the operations on that
machine whose earliest start would collide with it, and let a priority
rule pick the winner. Run on a deterministic projection (expected
durations, known commitments) it yields per-machine sequences plus machine
assignments that plan-following agents and the re-scheduling hook replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import SimulationError
from .instance import Instance


@dataclass
class ProjOp:
    job: int
    op: int
    op_type: int
    duration: float  # expected processing time at speed 1
    preds: frozenset[int]
    eligible: tuple[int, ...]  # machine ids


@dataclass
class Projection:
    """Deterministic view of the remaining scheduling problem."""

    ops: list[ProjOp]
    job_ready: dict[int, float]
    machine_ready: dict[int, float]
    machine_speed: dict[int, dict[int, float]]  # mid -> job -> speed
    machine_last: dict[int, int | None]
    due: dict[int, float | None]
    setup: object  # callable (mid, prev_job, job) -> time


@dataclass
class Plan:
    sequences: dict[int, list[tuple[int, int]]]
    assignment: dict[tuple[int, int], int]
    starts: dict[tuple[int, int], float]
    ends: dict[tuple[int, int], float]
    makespan: float = 0.0


def projection_from_instance(inst: Instance) -> Projection:
    ops = []
    for job in inst.jobs:
        for op in job.operations:
            ops.append(ProjOp(
                job=job.job_id, op=op.op_index, op_type=op.op_type,
                duration=op.base_duration * _mean_factor(inst),
                preds=op.predecessors,
                eligible=tuple(sorted(r.machine_id for r in inst.eligible_machines(op)))))
    job_ready = {}
    for job in inst.jobs:
        dist = inst.stochastic.release_dist(job.job_id)
        job_ready[job.job_id] = dist.mean() if dist is not None else job.release
    return Projection(
        ops=ops,
        job_ready=job_ready,
        machine_ready={r.machine_id: 0.0 for r in inst.resources},
        machine_speed={r.machine_id: {j.job_id: r.speed_for(j.job_id) for j in inst.jobs}
                       for r in inst.resources},
        machine_last={r.machine_id: None for r in inst.resources},
        due={j.job_id: j.due for j in inst.jobs},
        setup=inst.setup_time,
    )


def _mean_factor(inst: Instance) -> float:
    d = inst.stochastic.duration_factor
    return d.mean() if d is not None else 1.0


def projection_from_state(state) -> Projection:
    """Residual problem as seen mid-run: done and running work excluded,
    machine commitments carried over. Unstarted durations stay expected;
    pre-sampled outcomes are not peeked at."""
    inst = state.inst
    now = state.clock
    ops = []
    for job in inst.jobs:
        done = state.done_ops[job.job_id]
        running = state.dispatched[job.job_id]
        for op in job.operations:
            if op.op_index in done or op.op_index in running:
                continue
            preds = frozenset(p for p in op.predecessors
                              if p not in done and p not in running)
            ops.append(ProjOp(
                job=job.job_id, op=op.op_index, op_type=op.op_type,
                duration=op.base_duration * _mean_factor(inst),
                preds=preds,
                eligible=tuple(state.eligible_machine_ids(job.job_id, op.op_index))))
    job_ready = {}
    for job in inst.jobs:
        ready = max(now, state.realized_release[job.job_id])
        for op_idx in state.dispatched[job.job_id]:
            mid = state.op_machine.get((job.job_id, op_idx))
            if mid is not None:
                ready = max(ready, state.machines[mid].phase_end)
        job_ready[job.job_id] = ready
    machine_ready = {}
    machine_last = {}
    for mid, m in state.machines.items():
        busy_until = now
        if m.phase in ("setup", "proc"):
            busy_until = max(busy_until, m.phase_end)
        machine_ready[mid] = busy_until
        machine_last[mid] = m.current[-1][0] if m.current else m.last_job
    return Projection(
        ops=ops,
        job_ready=job_ready,
        machine_ready=machine_ready,
        machine_speed={r.machine_id: {j.job_id: r.speed_for(j.job_id) for j in inst.jobs}
                       for r in inst.resources},
        machine_last=machine_last,
        due={j.job_id: j.due for j in inst.jobs},
        setup=inst.setup_time,
    )


def list_schedule(proj: Projection, rule: str = "SPT") -> Plan:
    """Build an active schedule, breaking machine conflicts with `rule`."""
    remaining = {(o.job, o.op): o for o in proj.ops}
    done: dict[int, set[int]] = {}
    for o in proj.ops:
        done.setdefault(o.job, set())
    job_ready = dict(proj.job_ready)
    machine_ready = dict(proj.machine_ready)
    machine_last = dict(proj.machine_last)
    op_end: dict[tuple[int, int], float] = {}

    sequences: dict[int, list[tuple[int, int]]] = {m: [] for m in machine_ready}
    assignment: dict[tuple[int, int], int] = {}
    starts: dict[tuple[int, int], float] = {}
    ends: dict[tuple[int, int], float] = {}

    job_busy_until: dict[int, float] = {j: 0.0 for j in done}

    def ready_time(o: ProjOp) -> float:
        # a job occupies one machine at a time, even without precedence
        t = max(job_ready[o.job], job_busy_until[o.job])
        for p in o.preds:
            t = max(t, op_end.get((o.job, p), 0.0))
        return t

    def timings(o: ProjOp, mid: int) -> tuple[float, float]:
        arrive = max(ready_time(o), machine_ready[mid])
        setup = proj.setup(mid, machine_last[mid], o.job)
        start = arrive + setup
        dur = o.duration / proj.machine_speed[mid][o.job]
        return start, start + dur

    def rule_key(o: ProjOp, mid: int):
        if rule == "SPT":
            k = o.duration / proj.machine_speed[mid][o.job]
        elif rule == "LPT":
            k = -o.duration / proj.machine_speed[mid][o.job]
        elif rule == "EDD":
            due = proj.due.get(o.job)
            k = due if due is not None else float("inf")
        elif rule == "FIFO":
            k = ready_time(o)
        elif rule == "LIFO":
            k = -ready_time(o)
        else:
            raise SimulationError(f"unknown planning rule {rule!r}")
        return (k, o.job, o.op)

    guard = 0
    while remaining:
        guard += 1
        if guard > len(proj.ops) + 1:
            raise SimulationError("list scheduler failed to make progress")
        ready = [o for o in remaining.values()
                 if all(p in done[o.job] for p in o.preds)]
        if not ready:
            raise SimulationError("projection has a precedence cycle")
        best = None
        for o in ready:
            for mid in o.eligible:
                s, e = timings(o, mid)
                cand = (e, mid, o.job, o.op)
                if best is None or cand < best[0]:
                    best = (cand, o, mid)
        (phi, mid_star, _, _), _, _ = best
        conflict = []
        for o in ready:
            if mid_star in o.eligible:
                s, _ = timings(o, mid_star)
                if s < phi:
                    conflict.append(o)
        winner = min(conflict, key=lambda o: rule_key(o, mid_star))
        s, e = timings(winner, mid_star)
        key = (winner.job, winner.op)
        sequences[mid_star].append(key)
        assignment[key] = mid_star
        starts[key] = s
        ends[key] = e
        op_end[key] = e
        machine_ready[mid_star] = e
        machine_last[mid_star] = winner.job
        job_busy_until[winner.job] = max(job_busy_until[winner.job], e)
        done[winner.job].add(winner.op)
        del remaining[key]
        guard = 0

    makespan = max(ends.values(), default=0.0)
    return Plan(sequences=sequences, assignment=assignment, starts=starts,
                ends=ends, makespan=makespan)
