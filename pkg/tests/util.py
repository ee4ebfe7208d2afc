"""Shared test helpers: instance builders, brute-force oracles, validators."""

from __future__ import annotations

import itertools

from shopbench import instance as im
from shopbench import notation


def build_shop(routes, durations, gamma="C_max", releases=None, dues=None,
               alpha="Jm"):
    """Job-shop instance from per-job machine routes and duration lists."""
    n_machines = max(m for route in routes for m in route) + 1
    jobs = []
    for j, (route, durs) in enumerate(zip(routes, durations)):
        ops = []
        for k, (m, d) in enumerate(zip(route, durs)):
            preds = frozenset([k - 1]) if k > 0 else frozenset()
            ops.append(im.Operation(j, k, m, float(d), preds))
        release = releases[j] if releases else 0.0
        due = dues[j] if dues else None
        jobs.append(im.Job(j, tuple(ops), release=release, due=due))
    resources = tuple(im.Resource(machine_id=i, work_center=i,
                                  capabilities=frozenset([i]))
                      for i in range(n_machines))
    triplet = notation.parse_triplet(f"{alpha}||{gamma}")
    return im.Instance(triplet=triplet, jobs=tuple(jobs), resources=resources)


def cross22(d00, d01, d10, d11):
    """Two jobs, two machines, crossed routes (the canonical tiny job shop)."""
    return build_shop([[0, 1], [1, 0]], [[d00, d01], [d10, d11]])


def brute_force_makespan(inst) -> float:
    """Minimum makespan over all per-machine processing orders.

    Evaluates each order combination by longest-path over the union of job
    precedence and machine sequence edges; cyclic combinations are
    infeasible and skipped. Independent of the simulation engine.
    """
    ops = [(j.job_id, op.op_index) for j in inst.jobs for op in j.operations]
    dur = {(j.job_id, op.op_index): op.base_duration
           for j in inst.jobs for op in j.operations}
    release = {j.job_id: j.release for j in inst.jobs}
    on_machine: dict[int, list] = {}
    for j in inst.jobs:
        for op in j.operations:
            machines = [r.machine_id for r in inst.eligible_machines(op)]
            assert len(machines) == 1, "brute force assumes fixed routing"
            on_machine.setdefault(machines[0], []).append((j.job_id, op.op_index))

    job_preds = {}
    for j in inst.jobs:
        for op in j.operations:
            job_preds[(j.job_id, op.op_index)] = [(j.job_id, p) for p in op.predecessors]

    best = float("inf")
    machine_ids = sorted(on_machine)
    for perm_combo in itertools.product(
            *[itertools.permutations(on_machine[m]) for m in machine_ids]):
        preds = {o: list(job_preds[o]) for o in ops}
        for seq in perm_combo:
            for a, b in zip(seq, seq[1:]):
                preds[b].append(a)
        start: dict = {}
        remaining = set(ops)
        feasible = True
        while remaining:
            ready = [o for o in remaining if all(p in start for p in preds[o])]
            if not ready:
                feasible = False  # cyclic combination
                break
            for o in ready:
                s = release[o[0]]
                for p in preds[o]:
                    s = max(s, start[p] + dur[p])
                start[o] = s
                remaining.discard(o)
        if feasible:
            cmax = max(start[o] + dur[o] for o in ops)
            best = min(best, cmax)
    return best


def check_conservation(state) -> list[str]:
    """Feasibility of a finished run: one execution per op, no machine
    overlap, precedence and release respected."""
    problems = []
    inst = state.inst
    for j in inst.jobs:
        for op in j.operations:
            key = (j.job_id, op.op_index)
            segs = state.op_segments.get(key, [])
            if op.op_index in state.done_ops[j.job_id]:
                if not segs:
                    problems.append(f"{key} done but never ran")
                    continue
                if key not in state.op_start:
                    problems.append(f"{key} missing start")
            else:
                problems.append(f"{key} unfinished")
                continue
            s = state.op_start[key]
            if s < state.realized_release[j.job_id] - 1e-9:
                problems.append(f"{key} started before release")
            for p in op.predecessors:
                pend = max(e for _, e in state.op_segments[(j.job_id, p)])
                if s < pend - 1e-9:
                    problems.append(f"{key} started before predecessor {p}")
    for mid, m in state.machines.items():
        intervals = sorted(m.busy_log + m.setup_log)
        for (s1, e1), (s2, e2) in zip(intervals, intervals[1:]):
            if s2 < e1 - 1e-9:
                problems.append(f"machine {mid} overlap {s1, e1} vs {s2, e2}")
    for j in inst.jobs:
        if state.job_finished(j.job_id):
            ends = [max(e for _, e in state.op_segments[(j.job_id, op.op_index)])
                    for op in j.operations]
            if abs(state.completion[j.job_id] - max(ends)) > 1e-9:
                problems.append(f"job {j.job_id} completion mismatch")
    return problems


def pareto_brute_force(points, directions):
    """Quadratic pairwise dominance filter, defined independently."""
    signs = [1 if d == "min" else -1 for d in directions]

    def dominated(i):
        for k, q in enumerate(points):
            if k == i:
                continue
            p = points[i]
            if all(s * qv <= s * pv for qv, pv, s in zip(q, p, signs)) and \
               any(s * qv < s * pv for qv, pv, s in zip(q, p, signs)):
                return True
        return False

    return [i for i in range(len(points)) if not dominated(i)]
