"""Deterministic discrete-event engine.

Every stochastic draw a run will ever need (release offsets, duration
multipliers, failure/repair times, demand arrivals) is sampled up front at
init from named seeded streams, so the exogenous event multiset is a pure
function of (instance, seed, horizon) and never depends on how the run is
controlled. Identical inputs give bit-identical traces; a recorded action
log replays to the same trace hash.

Agent interaction happens at decision points. `advance` runs the event
loop until a decision is required (or the run ends) and `apply_action`
effects one legal action. Which decision kinds are surfaced to the agent
versus resolved by internal rules is configured with a SimMode.

Physical model: a job is a single token. Between processing steps it sits
in a machine's input buffer (committed to one operation), in a machine's
output buffer (finished there, moving on), held on a blocked machine, on a
vehicle, in entry staging (released, destination fixed, waiting for buffer
space) or in the routing pool (destination still open). Jobs whose partial
order leaves several operations ready appear in the pool once per ready
operation; starting one withdraws the others.
"""

from __future__ import annotations

import copy
import heapq
import json
from dataclasses import dataclass

from .errors import (IllegalActionError, ReplayDivergence, SimulationError,
                     UnsupportedConstraint)
from .instance import Instance, Operation, Resource, UNBOUNDED
from .notation import Tag
from .objectives import (JobRecord, MachineRecord, OpRecord, ScheduleRecord,
                         VehicleRecord)
from .rng import RngStream, fnv1a64

# Event kinds in tie-break order at equal time: repairs complete first, then
# arrivals of work, then machine-side completions and transport, and new
# failures last. Remaining ties fall to machine id, job id, then issue order.
_PRIO = {
    "breakdown_end": 0,
    "job_release": 10,
    "capacity_add": 15,
    "demand_arrival": 20,
    "setup_end": 30,
    "op_complete": 40,
    "vehicle_pickup": 45,
    "vehicle_arrival": 50,
    "breakdown_start": 60,
}

_EXOGENOUS = ("job_release", "breakdown_start", "breakdown_end",
              "demand_arrival", "capacity_add")

STREAM_NAMES = ("releases", "durations", "breakdowns", "demand", "agent-exploration")

_REJECTED_TAGS = {Tag.PRMP: "preemption", Tag.NWT: "no-wait", Tag.PREC: "job precedence"}

SEQUENCING_RULES = ("SPT", "LPT", "EDD", "FIFO", "LIFO")
ROUTING_RULES = ("SQ", "LQE", "SST")


@dataclass(frozen=True)
class SimMode:
    """Which roles the agent controls; everything else runs on internal rules.

    sequencing: "agent" | "rule:<name>" | "plan"
    routing:    "virtual" | "at_release" | "on_completion" | "rule:<name>"
                | "transport" | "plan"
    transport:  "agent" | "auto"
    """

    sequencing: str = "agent"
    routing: str = "virtual"
    transport: str = "auto"
    reschedule_triggers: frozenset = frozenset()
    internal_seq_rule: str = "FIFO"
    internal_route_rule: str = "SQ"


@dataclass
class DecisionPoint:
    kind: str  # sequencing | routing | transport_source | transport_destination | reschedule
    legal_actions: list
    machine_id: int = -1
    vehicle_id: int = -1
    job_id: int = -1
    op_index: int = -1
    trigger: str = ""


@dataclass(frozen=True)
class Terminal:
    kind: str  # success | deadlock | horizon
    clock: float
    diagnostic: str = ""


class _Item:
    """A job waiting for (or moving toward) one specific operation."""

    __slots__ = ("job", "op", "since", "dest", "reserved")

    def __init__(self, job: int, op: int, since: float, dest: int | None = None):
        self.job = job
        self.op = op
        self.since = since
        self.dest = dest  # assigned machine once routing is decided
        self.reserved = False  # claimed by a vehicle

    def key(self):
        return (self.job, self.op)


class _Machine:
    def __init__(self, res: Resource, online: bool = True):
        self.res = res
        self.mid = res.machine_id
        self.input_buf: list[_Item] = []
        self.output_buf: list[_Item] = []
        self.held: _Item | None = None
        self.current: list[tuple[int, int]] = []  # (job, op); >1 only for batches
        self.phase = "idle"  # idle | setup | proc
        self.phase_end = 0.0
        self.proc_started = 0.0
        self.remaining = 0.0  # frozen processing time while down
        self.frozen = False
        self.is_down = not online
        self.pending_down = False
        self.last_job: int | None = None
        self.deferred = False
        self.token = 0
        self.busy_log: list[tuple[float, float]] = []
        self.setup_log: list[tuple[float, float]] = []
        self.down_log: list[tuple[float, float]] = []
        self.down_since: float | None = None if online else 0.0
        self.buffer_series: list[tuple[float, int]] = [(0.0, 0)]

    @property
    def can_start(self) -> bool:
        return (self.phase == "idle" and not self.is_down and self.held is None
                and not self.current)

    def input_has_space(self) -> bool:
        cap = self.res.input_buffer_capacity
        return cap is UNBOUNDED or len(self.input_buf) < cap

    def output_has_space(self) -> bool:
        cap = self.res.output_buffer_capacity
        return cap is UNBOUNDED or len(self.output_buf) < cap

    def log_buffer(self, t: float) -> None:
        self.buffer_series.append((t, len(self.input_buf)))


class _Vehicle:
    def __init__(self, vid: int, position: int):
        self.vid = vid
        self.position = position
        self.phase = "idle"  # idle | assigned | to_dest | wait_dest
        self.item: _Item | None = None
        self.src = -1
        self.dst = -1
        self.loaded_log: list[tuple[float, float]] = []
        self.loaded_since: float | None = None


class SimState:
    """Full dynamic state of one run. Construct through `init`."""

    def __init__(self, inst: Instance, seed: int, horizon: float | None,
                 mode: SimMode, preempt_restart: bool, record_trace: bool):
        for tag, name in _REJECTED_TAGS.items():
            if tag in inst.triplet.tags():
                raise UnsupportedConstraint(
                    f"{tag.value} ({name}) is accepted by the notation but not "
                    f"executable by this engine")
        self.inst = inst
        self.seed = seed
        self.horizon = horizon
        self.mode = mode
        self.preempt_restart = preempt_restart
        self.record_trace = record_trace

        self.clock = 0.0
        self._seq = 0
        self._events: list = []
        self.streams = {name: RngStream(seed, name) for name in STREAM_NAMES}

        sto = inst.stochastic
        needs_horizon = sto.breakdowns is not None or sto.demand is not None
        if needs_horizon and (horizon is None or horizon <= 0):
            raise SimulationError(
                "a positive horizon is required to pre-sample breakdown/demand events")

        offline = {ev.payload for ev in inst.scripted_events if ev.kind == "capacity_add"}
        self.machines = {r.machine_id: _Machine(r, online=r.machine_id not in offline)
                         for r in inst.resources}
        for mid in sorted(offline):
            if mid not in self.machines:
                raise SimulationError(f"capacity_add references unknown machine {mid}")

        self.vehicles: list[_Vehicle] = []
        tr = inst.transport
        if tr.mode == "fleet":
            homes = tr.home or tuple(0 for _ in range(tr.fleet_size))
            self.vehicles = [_Vehicle(v, homes[v]) for v in range(tr.fleet_size)]
        self._synthetic_loads: list[tuple[float, float]] = []  # infinite-fleet log

        # per-job progress
        self.released: set[int] = set()
        self.done_ops: dict[int, set[int]] = {j.job_id: set() for j in inst.jobs}
        self.dispatched: dict[int, set[int]] = {j.job_id: set() for j in inst.jobs}
        self.completion: dict[int, float] = {}
        self.pool: list[_Item] = []  # destination still open
        self.entry: list[_Item] = []  # destination fixed, waiting for buffer space
        self.route_queue: list[tuple[int, int]] = []  # pending routing decisions
        self.assignments: dict[tuple[int, int], int] = {}
        self.sink_level = 0
        self.sink_series: list[tuple[float, int]] = [(0.0, 0)]
        self.plan: dict[int, list[tuple[int, int]]] = {}
        self.plan_cursor: dict[int, int] = {}
        self.reschedule_pending: str | None = "init" if mode.reschedule_triggers else None
        self.stochastic_event_count = 0
        self.fallback_log: list[str] = []

        # realized data, sampled up front (policy independence)
        self.realized_mult: dict[tuple[int, int], float] = {}
        self.realized_release: dict[int, float] = {}
        self.exogenous_events: list[tuple[float, str, int]] = []
        self._presample()

        # execution records
        self.op_segments: dict[tuple[int, int], list[tuple[float, float]]] = {}
        self.op_machine: dict[tuple[int, int], int] = {}
        self.op_start: dict[tuple[int, int], float] = {}

        self.trace: list[dict] = []
        self.step_no = 0
        self.pending_dp: DecisionPoint | None = None
        self.terminal: Terminal | None = None
        self.action_log: list[tuple] = []
        self._scheduler_callback = None  # pluggable re-scheduling hook

        if self.record_trace:
            self._trace_entry("init", {"seed": seed, "horizon": horizon})

    # ------------------------------------------------------------------
    # initialization

    def _push(self, time: float, kind: str, machine: int = -1, job: int = -1,
              payload: dict | None = None, token: int = -1) -> None:
        self._seq += 1
        heapq.heappush(self._events, (time, _PRIO[kind], machine, job, self._seq,
                                      kind, payload or {}, token))

    def _presample(self) -> None:
        inst = self.inst
        sto = inst.stochastic

        rel_stream = self.streams["releases"]
        for job in inst.jobs:
            dist = sto.release_dist(job.job_id)
            when = dist.sample(rel_stream) if dist is not None else job.release
            self.realized_release[job.job_id] = when
            self._push(when, "job_release", job=job.job_id)
            self.exogenous_events.append((when, "job_release", job.job_id))

        dur_stream = self.streams["durations"]
        for job in inst.jobs:
            for op in job.operations:
                mult = (sto.duration_factor.sample(dur_stream)
                        if sto.duration_factor is not None else 1.0)
                if mult <= 0:
                    raise SimulationError("duration multiplier must stay positive")
                self.realized_mult[(job.job_id, op.op_index)] = mult

        brk_stream = self.streams["breakdowns"]
        if sto.breakdowns is not None:
            for mid in sorted(m for m, _, _ in sto.breakdowns):
                fail, repair = sto.breakdown_dists(mid)
                t = 0.0
                while True:
                    t += fail.sample(brk_stream)
                    if t > self.horizon:
                        break
                    self._push(t, "breakdown_start", machine=mid)
                    self.exogenous_events.append((t, "breakdown_start", mid))
                    t += repair.sample(brk_stream)
                    self._push(t, "breakdown_end", machine=mid)
                    self.exogenous_events.append((t, "breakdown_end", mid))

        dmd_stream = self.streams["demand"]
        if sto.demand is not None:
            t = 0.0
            while True:
                t += sto.demand.sample(dmd_stream)
                if t > self.horizon:
                    break
                self._push(t, "demand_arrival")
                self.exogenous_events.append((t, "demand_arrival", -1))

        for ev in inst.scripted_events:
            self._push(ev.time, ev.kind,
                       machine=ev.payload if ev.kind != "demand_arrival" else -1)
            self.exogenous_events.append((ev.time, ev.kind, ev.payload))

        self.exogenous_events.sort()

    # ------------------------------------------------------------------
    # helpers

    def op_obj(self, job_id: int, op_index: int) -> Operation:
        return self.inst.jobs[job_id].operations[op_index]

    def realized_duration(self, job: int, op: int, machine_id: int) -> float:
        o = self.op_obj(job, op)
        res = self.machines[machine_id].res
        return o.base_duration * self.realized_mult[(job, op)] / res.speed_for(job)

    def job_finished(self, job_id: int) -> bool:
        return len(self.done_ops[job_id]) == len(self.inst.jobs[job_id].operations)

    def all_done(self) -> bool:
        return all(self.job_finished(j.job_id) for j in self.inst.jobs)

    def ready_ops(self, job_id: int) -> list[int]:
        """Operations whose predecessors are complete, neither done nor running."""
        done = self.done_ops[job_id]
        disp = self.dispatched[job_id]
        out = []
        for op in self.inst.jobs[job_id].operations:
            if op.op_index in done or op.op_index in disp:
                continue
            if op.predecessors <= done:
                out.append(op.op_index)
        return out

    def eligible_machine_ids(self, job: int, op: int) -> list[int]:
        o = self.op_obj(job, op)
        return sorted(r.machine_id for r in self.inst.eligible_machines(o))

    def input_work(self, mid: int) -> float:
        m = self.machines[mid]
        return sum(self.realized_duration(i.job, i.op, mid) for i in m.input_buf)

    def output_waiting(self, mid: int) -> list[_Item]:
        return [i for i in self.machines[mid].output_buf if not i.reserved]

    def _needs_transport(self) -> bool:
        return self.inst.transport.mode != "none"

    def travel_time(self, a: int, b: int) -> float:
        if a < 0 or a == b:
            return 0.0
        return self.inst.transport.travel[a][b]

    def _virtual_local(self) -> bool:
        return self.mode.routing == "virtual" and not self._needs_transport()

    # ------------------------------------------------------------------
    # rule keys (shared by internal control, rule agents and rule actions)

    def seq_rule_key(self, rule: str, machine_id: int, item_key: tuple[int, int],
                     since: float):
        job, op = item_key
        if rule == "SPT":
            k = self.realized_duration(job, op, machine_id)
        elif rule == "LPT":
            k = -self.realized_duration(job, op, machine_id)
        elif rule == "EDD":
            due = self.inst.jobs[job].due
            k = due if due is not None else float("inf")
        elif rule == "FIFO":
            k = since
        elif rule == "LIFO":
            k = -since
        else:
            raise SimulationError(f"unknown sequencing rule {rule!r}")
        return (k, job, op)

    def route_rule_key(self, rule: str, job: int, machine_id: int):
        if rule == "SQ":
            k = self.input_work(machine_id)
        elif rule == "LQE":
            k = float(len(self.machines[machine_id].input_buf))
        elif rule == "SST":
            m = self.machines[machine_id]
            k = self.inst.setup_time(machine_id, m.last_job, job)
        else:
            raise SimulationError(f"unknown routing rule {rule!r}")
        return (k, machine_id)

    def source_rule_key(self, rule: str, machine_id: int):
        items = self.output_waiting(machine_id)
        if rule == "SQ":
            k = -sum(self.op_obj(i.job, i.op).base_duration for i in items)
        elif rule == "LQE":
            k = -float(len(items))
        else:  # serve the longest-waiting head
            k = min(i.since for i in items)
        return (k, machine_id)

    # ------------------------------------------------------------------
    # candidate enumeration

    def sequencing_candidates(self, mid: int) -> list[_Item]:
        """Startable work for a machine: its input buffer plus, in open
        routing, any pool job with a matching ready operation."""
        m = self.machines[mid]
        out = list(m.input_buf)
        if self.mode.routing == "virtual":
            for item in self.pool:
                o = self.op_obj(item.job, item.op)
                if o.op_type in m.res.capabilities and self._job_allowed(m.res, item.job):
                    out.append(item)
        out.sort(key=lambda i: (i.job, i.op))
        return out

    def _job_allowed(self, res: Resource, job: int) -> bool:
        return res.eligible_jobs is None or job in res.eligible_jobs

    def _future_candidate_possible(self, mid: int) -> bool:
        m = self.machines[mid]
        present = {i.key() for i in self.sequencing_candidates(mid)}
        for job in self.inst.jobs:
            for op in job.operations:
                key = (job.job_id, op.op_index)
                if key in present or op.op_index in self.done_ops[job.job_id]:
                    continue
                if op.op_index in self.dispatched[job.job_id]:
                    continue
                if op.op_type in m.res.capabilities and self._job_allowed(m.res, job.job_id):
                    return True
        return False

    def _defer_legal(self, mid: int) -> bool:
        """Waiting is allowed only when the candidate set can still grow and
        time is guaranteed to advance: an event is pending, or some other
        non-deferred actor can act right now (the last such machine can
        never defer, so progress is preserved)."""
        if not self._future_candidate_possible(mid):
            return False
        if self._events:
            return True
        if self.route_queue and self.mode.routing in ("at_release", "on_completion"):
            return True
        if any(v.phase == "assigned" for v in self.vehicles):
            return True
        for other_id in sorted(self.machines):
            if other_id == mid:
                continue
            m = self.machines[other_id]
            if not m.can_start or m.deferred:
                continue
            if m.res.batch_spec is not None:
                if self._batch_ready(m):
                    return True
            elif self.sequencing_candidates(other_id):
                return True
        return False

    # ------------------------------------------------------------------
    # the event loop

    def advance(self):
        """Run until an agent decision is needed or the episode ends."""
        if self.terminal is not None:
            raise SimulationError("run already ended")
        if self.pending_dp is not None:
            return self.pending_dp
        while True:
            self._propagate()
            if self.all_done():
                return self._finish(Terminal("success", self.clock))
            # decisions are taken only once the current instant is fully
            # played out; anything still due now is processed first. The
            # same discipline applies to internally resolved sequencing so
            # rule-driven and agent-driven control see identical queues.
            due_now = bool(self._events) and self._events[0][0] <= self.clock
            if not due_now:
                dp = self._scan_decisions()
                if dp is not None:
                    self.pending_dp = dp
                    if self.record_trace:
                        self._trace_entry("decision", {
                            "kind": dp.kind, "machine": dp.machine_id,
                            "vehicle": dp.vehicle_id, "job": dp.job_id,
                            "legal": [list(a) for a in dp.legal_actions]})
                    return dp
                if self._auto_sequencing():
                    continue
            if not self._events:
                return self._finish(Terminal("deadlock", self.clock, self._diagnose()))
            if (self.horizon is not None and self.inst.stochastic.demand is not None
                    and self._events[0][0] > self.horizon):
                return self._finish(Terminal("horizon", self.horizon))
            self._process(heapq.heappop(self._events))

    def _finish(self, term: Terminal) -> Terminal:
        self.terminal = term
        if self.record_trace:
            self._trace_entry("terminal", {"kind": term.kind, "clock": term.clock})
        return term

    def _diagnose(self) -> str:
        blocked = [m.mid for m in self.machines.values() if m.held is not None]
        waiting: set[int] = {i.job for i in self.pool + self.entry}
        for m in self.machines.values():
            waiting |= {i.job for i in m.input_buf + m.output_buf}
        return (f"no events pending, unfinished jobs remain; "
                f"blocked machines={blocked}, waiting jobs={sorted(waiting)}")

    def _process(self, ev) -> None:
        time, _, machine, job, _, kind, payload, token = ev
        if kind in ("setup_end", "op_complete") and token != self.machines[machine].token:
            return  # cancelled by a breakdown preemption
        if time < self.clock - 1e-9:
            raise SimulationError("event queue went backwards")
        self.clock = max(self.clock, time)
        for m in self.machines.values():
            m.deferred = False
        handler = getattr(self, f"_on_{kind}")
        handler(machine, job, payload)
        if kind in _EXOGENOUS:
            if self._is_stochastic_kind(kind):
                self.stochastic_event_count += 1
            if self.mode.reschedule_triggers and kind in self.mode.reschedule_triggers:
                self.reschedule_pending = kind
        if self.record_trace:
            self._trace_entry("event", {"kind": kind, "machine": machine, "job": job})

    def _is_stochastic_kind(self, kind: str) -> bool:
        sto = self.inst.stochastic
        if kind == "job_release":
            return sto.release is not None
        if kind in ("breakdown_start", "breakdown_end"):
            return sto.breakdowns is not None
        if kind == "demand_arrival":
            return sto.demand is not None
        return False

    # -- event handlers -------------------------------------------------

    def _on_job_release(self, machine, job, payload) -> None:
        self.released.add(job)
        if self.mode.routing == "at_release":
            for op in self.inst.jobs[job].operations:
                self.route_queue.append((job, op.op_index))
        self._stage_job(job, origin=None)

    def _on_capacity_add(self, machine, job, payload) -> None:
        m = self.machines[machine]
        if m.is_down and m.down_since is not None:
            m.down_log.append((m.down_since, self.clock))
        m.is_down = False
        m.down_since = None

    def _on_demand_arrival(self, machine, job, payload) -> None:
        self.sink_level -= 1
        self.sink_series.append((self.clock, self.sink_level))

    def _on_breakdown_start(self, machine, job, payload) -> None:
        m = self.machines[machine]
        if m.phase == "setup":
            m.pending_down = True  # setups run to completion
            return
        if m.phase == "proc" and not m.frozen:
            m.remaining = m.phase_end - self.clock
            m.frozen = True
            m.token += 1  # cancel the scheduled completion
            m.busy_log.append((m.proc_started, self.clock))
            for key in m.current:
                self.op_segments.setdefault(key, []).append((m.proc_started, self.clock))
        m.is_down = True
        m.down_since = self.clock

    def _on_breakdown_end(self, machine, job, payload) -> None:
        m = self.machines[machine]
        if m.pending_down:
            m.pending_down = False  # failure came and went during one setup
            return
        if not m.is_down:
            return
        m.is_down = False
        if m.down_since is not None:
            m.down_log.append((m.down_since, self.clock))
        m.down_since = None
        if m.phase == "proc" and m.frozen:
            remaining = m.remaining
            if self.preempt_restart:
                remaining = self._occupancy(m)
            self._resume_processing(m, remaining)

    def _occupancy(self, m: _Machine) -> float:
        spec = m.res.batch_spec
        if spec is not None and spec.kind == "fixed":
            return spec.duration
        total = 0.0
        for job, op in m.current:
            total = max(total, self.realized_duration(job, op, m.mid))
        return total

    def _on_setup_end(self, machine, job, payload) -> None:
        m = self.machines[machine]
        m.setup_log.append((payload["setup_started"], self.clock))
        if m.pending_down:
            m.pending_down = False
            m.is_down = True
            m.down_since = self.clock
            m.phase = "proc"
            m.frozen = True
            m.remaining = self._occupancy(m)
            return
        self._begin_processing(m)

    def _begin_processing(self, m: _Machine) -> None:
        self._resume_processing(m, self._occupancy(m))

    def _resume_processing(self, m: _Machine, remaining: float) -> None:
        m.phase = "proc"
        m.frozen = False
        m.proc_started = self.clock
        for key in m.current:
            self.op_start.setdefault(key, self.clock)
        m.phase_end = self.clock + remaining
        m.token += 1
        self._push(m.phase_end, "op_complete", machine=m.mid, job=m.current[0][0],
                   token=m.token)

    def _on_op_complete(self, machine, job, payload) -> None:
        m = self.machines[machine]
        m.busy_log.append((m.proc_started, self.clock))
        finished = list(m.current)
        m.current = []
        m.phase = "idle"
        m.frozen = False
        for key in finished:
            self.op_segments.setdefault(key, []).append((m.proc_started, self.clock))
            self.done_ops[key[0]].add(key[1])
            self.dispatched[key[0]].discard(key[1])
        m.last_job = finished[-1][0]
        for key in finished:
            job_id = key[0]
            if self.job_finished(job_id):
                self.completion[job_id] = self.clock
                self.sink_level += 1
                self.sink_series.append((self.clock, self.sink_level))
            else:
                self._stage_job(job_id, origin=m)

    # -- staging: a job token (re)enters the waiting network -------------

    def _stage_job(self, job: int, origin: _Machine | None) -> None:
        ready = self.ready_ops(job)
        if not ready:
            return
        if self._virtual_local() and len(ready) > 1:
            # open precedence: offer every ready operation in the shared pool
            for op in ready:
                self.pool.append(_Item(job, op, self.clock))
            return
        op = ready[0]
        item = _Item(job, op, self.clock)
        routing = self.mode.routing

        if self._virtual_local():
            eligible = self.eligible_machine_ids(job, op)
            batching = any(self.machines[mid].res.batch_spec is not None
                           for mid in eligible)
            if len(eligible) == 1:
                item.dest = eligible[0]
                self._place(item, origin)
            elif batching:
                # batches form in a physical buffer, so commit the routing
                item.dest = min(eligible, key=lambda mid: self.route_rule_key(
                    self.mode.internal_route_rule, job, mid))
                self._place(item, origin)
            else:
                self.pool.append(item)
            return

        if routing == "on_completion":
            self.route_queue.append((job, op))
            self._place(item, origin)
            return
        if routing in ("at_release", "plan"):
            item.dest = self.assignments.get((job, op))
            self._place(item, origin)
            return
        if routing == "transport":
            if origin is None:  # entry is never vehicle-borne: auto-place
                eligible = self.eligible_machine_ids(job, op)
                item.dest = min(eligible, key=lambda mid: self.route_rule_key(
                    self.mode.internal_route_rule, job, mid))
            self._place(item, origin)
            return
        # rule-based routing (and virtual-with-transport, which degrades to it)
        rule = (routing.split(":", 1)[1] if routing.startswith("rule:")
                else self.mode.internal_route_rule)
        eligible = self.eligible_machine_ids(job, op)
        item.dest = min(eligible, key=lambda mid: self.route_rule_key(rule, job, mid))
        self._place(item, origin)

    def _place(self, item: _Item, origin: _Machine | None) -> None:
        """Freshly released work waits in entry staging; work leaving a
        machine goes through that machine's output side."""
        if origin is None:
            self.entry.append(item)
        elif origin.output_has_space():
            origin.output_buf.append(item)
        else:
            origin.held = item

    def _withdraw_siblings(self, item: _Item) -> None:
        self.pool[:] = [i for i in self.pool
                        if i is item or i.job != item.job]

    # -- transport event handlers ----------------------------------------

    def _on_vehicle_pickup(self, machine, job, payload) -> None:
        if payload.get("synthetic"):
            return
        v = self.vehicles[payload["vehicle"]]
        src = self.machines[v.src]
        src.output_buf.remove(v.item)
        v.position = v.src
        v.phase = "to_dest"
        v.loaded_since = self.clock

    def _on_vehicle_arrival(self, machine, job, payload) -> None:
        if payload.get("synthetic"):
            item = payload["item"]
            self._synthetic_loads.append((payload["departed"], self.clock))
            self._deliver(item, payload["dest"])
            return
        v = self.vehicles[payload["vehicle"]]
        v.position = v.dst
        if self.machines[v.dst].input_has_space():
            self._vehicle_drop(v)
        else:
            v.phase = "wait_dest"  # retried whenever buffer space changes

    def _vehicle_drop(self, v: _Vehicle) -> None:
        v.loaded_log.append((v.loaded_since, self.clock))
        v.loaded_since = None
        item, dest = v.item, v.dst
        v.item = None
        v.phase = "idle"
        v.src = v.dst = -1
        self._deliver(item, dest)

    def _deliver(self, item: _Item, dest: int) -> None:
        m = self.machines[dest]
        item.since = self.clock
        item.dest = dest
        item.reserved = False
        m.input_buf.append(item)
        m.log_buffer(self.clock)

    # ------------------------------------------------------------------
    # propagation of internal consequences

    def _propagate(self) -> None:
        for _ in range(1000000):
            if not self._propagate_once():
                return
        raise SimulationError("internal propagation did not settle")

    def _propagate_once(self) -> bool:
        changed = False
        # blocked machines: deliver the held item downstream directly when
        # possible, otherwise shift it into the output buffer
        for mid in sorted(self.machines):
            m = self.machines[mid]
            if m.held is None:
                continue
            if (not self._needs_transport() and m.held.dest is not None
                    and self.machines[m.held.dest].input_has_space()):
                item = m.held
                m.held = None
                self._deliver(item, item.dest)
                changed = True
            elif m.output_has_space():
                m.output_buf.append(m.held)
                m.held = None
                changed = True
        # non-vehicle moves: output buffers and entry staging into input buffers
        if not self._needs_transport():
            for mid in sorted(self.machines):
                m = self.machines[mid]
                for item in list(m.output_buf):
                    if item.dest is not None and self.machines[item.dest].input_has_space():
                        m.output_buf.remove(item)
                        self._deliver(item, item.dest)
                        changed = True
        for item in list(self.entry):
            if item.dest is not None and self.machines[item.dest].input_has_space():
                self.entry.remove(item)
                self._deliver(item, item.dest)
                changed = True
        # vehicles waiting at a full destination
        for v in self.vehicles:
            if v.phase == "wait_dest" and self.machines[v.dst].input_has_space():
                self._vehicle_drop(v)
                changed = True
        # infinite fleet: anything parked with a destination departs now
        if self.inst.transport.mode == "infinite":
            for mid in sorted(self.machines):
                m = self.machines[mid]
                for item in list(m.output_buf):
                    if item.dest is not None:
                        m.output_buf.remove(item)
                        eta = self.clock + self.travel_time(mid, item.dest)
                        self._push(eta, "vehicle_arrival", machine=item.dest,
                                   job=item.job,
                                   payload={"synthetic": True, "item": item,
                                            "dest": item.dest, "departed": self.clock})
                        changed = True
        if self.vehicles and self.mode.transport == "auto":
            changed |= self._auto_dispatch()
        if self.route_queue and self.mode.routing in ("at_release", "on_completion"):
            changed |= self._auto_route_singletons()
        return changed

    def _auto_route_singletons(self) -> bool:
        """Forced routing (exactly one legal target) resolves internally."""
        changed = False
        immediate = self.mode.routing == "on_completion"
        for job, op in list(self.route_queue):
            legal = [mid for mid in self.eligible_machine_ids(job, op)
                     if not immediate or self.machines[mid].input_has_space()]
            if len(legal) == 1:
                self._do_route(job, op, legal[0])
                changed = True
        return changed

    def _auto_dispatch(self) -> bool:
        changed = False
        for v in self.vehicles:
            if v.phase != "idle":
                continue
            waiting = []
            for mid in sorted(self.machines):
                for item in self.output_waiting(mid):
                    if item.dest is not None:
                        waiting.append((item.since, mid, item.job, item))
            if not waiting:
                break
            waiting.sort(key=lambda w: (w[0], w[1], w[2]))
            _, src, _, item = waiting[0]
            self._launch_vehicle(v, src, item, item.dest)
            changed = True
        return changed

    def _launch_vehicle(self, v: _Vehicle, src: int, item: _Item, dest: int) -> None:
        item.reserved = True
        item.dest = dest
        v.item = item
        v.src = src
        v.dst = dest
        v.phase = "to_dest"
        pickup = self.clock + self.travel_time(v.position, src)
        arrive = pickup + self.travel_time(src, dest)
        self._push(pickup, "vehicle_pickup", machine=src, job=item.job,
                   payload={"vehicle": v.vid})
        self._push(arrive, "vehicle_arrival", machine=dest, job=item.job,
                   payload={"vehicle": v.vid})

    def _auto_sequencing(self) -> bool:
        seq = self.mode.sequencing
        if self.reschedule_pending is not None and self._scheduler_callback is not None:
            return False  # machines wait for the fresh plan
        changed = False
        for mid in sorted(self.machines):
            m = self.machines[mid]
            if not m.can_start:
                continue
            if m.res.batch_spec is not None:
                if seq != "agent" and self._batch_ready(m):
                    self._start_batch(m)
                    changed = True
                continue
            if self._prmu_follower(mid):
                choice = self._rule_choice(mid, "FIFO")
            elif seq == "agent":
                continue
            elif seq == "plan":
                choice = self._plan_choice(mid)
            else:
                choice = self._rule_choice(mid, seq.split(":", 1)[1])
            if choice is not None:
                self._start_item(m, choice)
                changed = True
        return changed

    def _prmu_follower(self, mid: int) -> bool:
        if Tag.PRMU not in self.inst.triplet.tags():
            return False
        return self.machines[mid].res.work_center != 0

    def _rule_choice(self, mid: int, rule: str):
        cands = self.sequencing_candidates(mid)
        if not cands:
            return None
        return min(cands, key=lambda i: self.seq_rule_key(rule, mid, i.key(), i.since))

    def _plan_choice(self, mid: int):
        seqn = self.plan.get(mid, [])
        cursor = self.plan_cursor.get(mid, 0)
        cands = {i.key(): i for i in self.sequencing_candidates(mid)}
        while cursor < len(seqn):
            key = seqn[cursor]
            if key[1] in self.done_ops[key[0]] or key[1] in self.dispatched[key[0]]:
                cursor += 1
                continue
            self.plan_cursor[mid] = cursor
            if key in cands:
                self.plan_cursor[mid] = cursor + 1
                return cands[key]
            return None  # planned head not here yet: hold the machine
        self.plan_cursor[mid] = cursor
        if cands:  # plan exhausted but work appeared: fall back to FIFO
            self.fallback_log.append(f"machine {mid} ran past its plan at t={self.clock}")
            return self._rule_choice(mid, "FIFO")
        return None

    def _batch_ready(self, m: _Machine) -> bool:
        spec = m.res.batch_spec
        if spec.kind == "fixed":
            return len(m.input_buf) >= spec.size
        return len(m.input_buf) >= 1

    def _start_batch(self, m: _Machine) -> None:
        spec = m.res.batch_spec
        take = spec.size if spec.kind == "fixed" else min(len(m.input_buf), spec.size)
        members = m.input_buf[:take]
        del m.input_buf[:take]
        m.log_buffer(self.clock)
        for item in members:
            self.dispatched[item.job].add(item.op)
        m.current = [i.key() for i in members]
        for key in m.current:
            self.op_machine[key] = m.mid
        self._apply_setup_then_run(m, members[0].job)

    def _start_item(self, m: _Machine, item: _Item) -> None:
        if item in m.input_buf:
            m.input_buf.remove(item)
            m.log_buffer(self.clock)
        elif item in self.pool:
            self.pool.remove(item)
            self._withdraw_siblings(item)
        else:
            raise SimulationError("candidate item vanished")
        self.dispatched[item.job].add(item.op)
        m.current = [item.key()]
        self.op_machine[item.key()] = m.mid
        self._apply_setup_then_run(m, item.job)

    def _apply_setup_then_run(self, m: _Machine, first_job: int) -> None:
        st = self.inst.setup_time(m.mid, m.last_job, first_job)
        if st > 0:
            m.phase = "setup"
            m.phase_end = self.clock + st
            m.token += 1
            self._push(m.phase_end, "setup_end", machine=m.mid, job=first_job,
                       payload={"setup_started": self.clock}, token=m.token)
        else:
            self._begin_processing(m)

    # ------------------------------------------------------------------
    # agent decisions

    def _scan_decisions(self) -> DecisionPoint | None:
        if self.reschedule_pending is not None and self._scheduler_callback is not None:
            return DecisionPoint("reschedule", [("plan",)],
                                 trigger=self.reschedule_pending)
        if self.mode.routing in ("at_release", "on_completion"):
            dp = self._scan_routing()
            if dp is not None:
                return dp
        if self.vehicles and self.mode.transport == "agent":
            dp = self._scan_transport()
            if dp is not None:
                return dp
        if self.mode.sequencing == "agent":
            for mid in sorted(self.machines):
                m = self.machines[mid]
                if not m.can_start or m.deferred:
                    continue
                if m.res.batch_spec is not None:
                    legal = [("batch",)] if self._batch_ready(m) else []
                else:
                    legal = [("start", i.job, i.op)
                             for i in self.sequencing_candidates(mid)]
                if legal and self._defer_legal(mid):
                    legal.append(("defer",))
                if legal:
                    return DecisionPoint("sequencing", legal, machine_id=mid)
        return None

    def _scan_routing(self) -> DecisionPoint | None:
        immediate = self.mode.routing == "on_completion"
        for job, op in list(self.route_queue):
            legal = []
            for mid in self.eligible_machine_ids(job, op):
                if immediate and not self.machines[mid].input_has_space():
                    continue  # a full input buffer cannot be routed to
                legal.append(("route", mid))
            if not legal:
                continue  # wait for space; later queue entries may proceed
            return DecisionPoint("routing", legal, job_id=job, op_index=op)
        return None

    def _scan_transport(self) -> DecisionPoint | None:
        for v in self.vehicles:
            if v.phase == "assigned":
                item = v.item
                legal = [("dest", mid)
                         for mid in self.eligible_machine_ids(item.job, item.op)]
                return DecisionPoint("transport_destination", legal,
                                     vehicle_id=v.vid, job_id=item.job,
                                     op_index=item.op)
        for v in self.vehicles:
            if v.phase != "idle":
                continue
            sources = [mid for mid in sorted(self.machines) if self.output_waiting(mid)]
            if sources:
                return DecisionPoint("transport_source",
                                     [("source", mid) for mid in sources],
                                     vehicle_id=v.vid)
            break
        return None

    def apply_action(self, dp: DecisionPoint, action) -> None:
        """Effect one legal action; raises IllegalActionError otherwise (the
        state is untouched in that case)."""
        if self.terminal is not None:
            raise SimulationError("run already ended")
        if self.pending_dp is None:
            raise SimulationError("no decision pending; call advance first")
        dp = self.pending_dp
        action = tuple(action)
        if dp.kind == "reschedule":
            if not action or action[0] != "plan":
                raise IllegalActionError(action, dp.legal_actions)
        elif action not in dp.legal_actions:
            raise IllegalActionError(action, dp.legal_actions)

        if dp.kind == "sequencing":
            m = self.machines[dp.machine_id]
            if action[0] == "defer":
                m.deferred = True
            elif action[0] == "batch":
                self._start_batch(m)
            else:
                _, job, op = action
                item = next(i for i in self.sequencing_candidates(dp.machine_id)
                            if i.key() == (job, op))
                self._start_item(m, item)
        elif dp.kind == "routing":
            self._do_route(dp.job_id, dp.op_index, action[1])
        elif dp.kind == "transport_source":
            v = self.vehicles[dp.vehicle_id]
            items = self.output_waiting(action[1])
            item = min(items, key=lambda i: (i.since, i.job, i.op))
            item.reserved = True
            v.item = item
            v.src = action[1]
            v.dst = -1
            v.phase = "assigned"
        elif dp.kind == "transport_destination":
            v = self.vehicles[dp.vehicle_id]
            item = v.item
            v.dst = action[1]
            item.dest = action[1]
            v.phase = "to_dest"
            pickup = self.clock + self.travel_time(v.position, v.src)
            arrive = pickup + self.travel_time(v.src, v.dst)
            self._push(pickup, "vehicle_pickup", machine=v.src, job=item.job,
                       payload={"vehicle": v.vid})
            self._push(arrive, "vehicle_arrival", machine=v.dst, job=item.job,
                       payload={"vehicle": v.vid})
        elif dp.kind == "reschedule":
            self._do_reschedule(action)

        self.pending_dp = None
        self.action_log.append(action)
        if self.record_trace:
            self._trace_entry("action", {"kind": dp.kind, "action": list(action)})

    def _do_route(self, job: int, op: int, mid: int) -> None:
        self.route_queue.remove((job, op))
        self.assignments[(job, op)] = mid
        for item in self.entry + self.pool:
            if item.key() == (job, op):
                item.dest = mid
                return
        for m in self.machines.values():
            for item in m.output_buf:
                if item.key() == (job, op):
                    item.dest = mid
                    return
            if m.held is not None and m.held.key() == (job, op):
                m.held.dest = mid
                return
        # routed ahead of release (fixed-path mode): remembered in assignments

    def _do_reschedule(self, action: tuple) -> None:
        self.reschedule_pending = None
        params = action[1:] if len(action) > 1 else ()
        plan = self._scheduler_callback(self, params)
        self.plan = {mid: list(seq) for mid, seq in plan.sequences.items()}
        self.plan_cursor = {mid: 0 for mid in self.plan}
        self.assignments.update(plan.assignment)
        for item in self.entry + self.pool:
            if item.key() in plan.assignment:
                item.dest = plan.assignment[item.key()]
        for m in self.machines.values():
            for item in m.output_buf:
                if item.key() in plan.assignment:
                    item.dest = plan.assignment[item.key()]
            if m.held is not None and m.held.key() in plan.assignment:
                m.held.dest = plan.assignment[m.held.key()]

    # ------------------------------------------------------------------
    # context for agents / observation builders

    def decision_context(self, dp: DecisionPoint) -> list[dict]:
        """Serializable metadata for each legal action."""
        out = []
        for action in dp.legal_actions:
            entry: dict = {"action": list(action)}
            if action[0] == "start":
                _, job, op = action
                item = next(i for i in self.sequencing_candidates(dp.machine_id)
                            if i.key() == (job, op))
                entry.update({
                    "job": job, "op": op,
                    "duration": self.realized_duration(job, op, dp.machine_id),
                    "due": self.inst.jobs[job].due,
                    "since": item.since,
                    "release": self.realized_release[job],
                    "setup": self.inst.setup_time(
                        dp.machine_id, self.machines[dp.machine_id].last_job, job),
                })
            elif action[0] in ("route", "dest"):
                mid = action[1]
                entry.update({
                    "machine": mid,
                    "queue_work": self.input_work(mid),
                    "queue_len": len(self.machines[mid].input_buf),
                    "setup": self.inst.setup_time(
                        mid, self.machines[mid].last_job, dp.job_id),
                })
            elif action[0] == "source":
                mid = action[1]
                items = self.output_waiting(mid)
                entry.update({
                    "machine": mid,
                    "waiting_len": len(items),
                    "waiting_work": sum(self.op_obj(i.job, i.op).base_duration
                                        for i in items),
                    "oldest_since": min(i.since for i in items),
                })
            out.append(entry)
        return out

    # ------------------------------------------------------------------
    # trace and hashing

    def state_summary(self) -> dict:
        """Canonical snapshot of the dynamic state (hash input)."""
        machines = []
        for mid in sorted(self.machines):
            m = self.machines[mid]
            machines.append({
                "id": mid,
                "phase": m.phase,
                "down": m.is_down,
                "frozen": m.frozen,
                "until": m.phase_end if m.phase in ("setup", "proc") else 0.0,
                "rem": m.remaining if m.frozen else 0.0,
                "current": sorted(m.current),
                "in": [[i.job, i.op] for i in m.input_buf],
                "out": [[i.job, i.op, -1 if i.dest is None else i.dest]
                        for i in m.output_buf],
                "held": ([m.held.job, m.held.op, -1 if m.held.dest is None else m.held.dest]
                         if m.held else None),
                "last": -1 if m.last_job is None else m.last_job,
            })
        vehicles = [{
            "id": v.vid, "pos": v.position, "phase": v.phase, "src": v.src,
            "dst": v.dst, "item": [v.item.job, v.item.op] if v.item else None,
        } for v in self.vehicles]
        return {
            "t": self.clock,
            "machines": machines,
            "vehicles": vehicles,
            "pool": sorted([i.job, i.op] for i in self.pool),
            "entry": sorted([i.job, i.op, -1 if i.dest is None else i.dest]
                            for i in self.entry),
            "done": {str(j): sorted(v) for j, v in sorted(self.done_ops.items())},
            "completed": {str(j): c for j, c in sorted(self.completion.items())},
            "sink": self.sink_level,
        }

    def state_hash(self) -> int:
        payload = json.dumps(self.state_summary(), sort_keys=True,
                             separators=(",", ":"))
        return fnv1a64(payload.encode("utf-8"))

    def _trace_entry(self, category: str, payload: dict) -> None:
        self.trace.append({
            "step": self.step_no,
            "t": self.clock,
            category: payload,
            "hash": f"{self.state_hash():016x}",
        })
        self.step_no += 1

    def trace_digest(self) -> str:
        body = "\n".join(json.dumps(rec, sort_keys=True, separators=(",", ":"))
                         for rec in self.trace)
        return f"{fnv1a64(body.encode('utf-8')):016x}"

    def trace_lines(self) -> list[str]:
        return [json.dumps(rec, sort_keys=True, separators=(",", ":"))
                for rec in self.trace]

    # ------------------------------------------------------------------
    # export

    def schedule_record(self) -> ScheduleRecord:
        jobs = []
        for j in self.inst.jobs:
            total = 0.0
            for op in j.operations:
                for s, e in self.op_segments.get((j.job_id, op.op_index), []):
                    total += e - s
            jobs.append(JobRecord(
                job_id=j.job_id,
                release=self.realized_release[j.job_id],
                due=j.due,
                total_processing=total,
                completion=self.completion.get(j.job_id)))
        ops = []
        for key in sorted(self.op_segments):
            job, op = key
            if op not in self.done_ops[job]:
                continue
            segs = self.op_segments[key]
            ops.append(OpRecord(
                job_id=job, op_index=op,
                machine_id=self.op_machine.get(key, -1),
                start=self.op_start[key],
                duration=sum(e - s for s, e in segs)))
        machines = []
        for mid in sorted(self.machines):
            m = self.machines[mid]
            down = list(m.down_log)
            if m.is_down and m.down_since is not None:
                down.append((m.down_since, self.clock))
            machines.append(MachineRecord(
                machine_id=mid, busy=list(m.busy_log), setup=list(m.setup_log),
                down=down, buffer_series=list(m.buffer_series)))
        vehicles = [VehicleRecord(v.vid, list(v.loaded_log)) for v in self.vehicles]
        if self._synthetic_loads:
            vehicles.append(VehicleRecord(len(self.vehicles), list(self._synthetic_loads)))
        return ScheduleRecord(jobs=jobs, ops=ops, machines=machines,
                              vehicles=vehicles, sink_series=list(self.sink_series),
                              horizon=self.clock)

    def clone(self) -> "SimState":
        """Deep copy sharing the immutable instance (search helper)."""
        inst = self.inst
        cb = self._scheduler_callback
        self.inst = None
        self._scheduler_callback = None
        try:
            dup = copy.deepcopy(self)
        finally:
            self.inst = inst
            self._scheduler_callback = cb
        dup.inst = inst
        dup._scheduler_callback = cb
        return dup


# ---------------------------------------------------------------------------
# module-level operations


def init(inst: Instance, seed: int, horizon: float | None = None,
         mode: SimMode | None = None, *, preempt_restart: bool = False,
         record_trace: bool = True) -> SimState:
    """Fresh run state with every exogenous event pre-sampled."""
    return SimState(inst, seed, horizon, mode or SimMode(), preempt_restart,
                    record_trace)


def advance(state: SimState):
    return state.advance()


def apply_action(state: SimState, dp: DecisionPoint, action) -> SimState:
    state.apply_action(dp, action)
    return state


def replay(inst: Instance, seed: int, horizon: float | None,
           action_log: list, mode: SimMode | None = None,
           preempt_restart: bool = False) -> SimState:
    """Re-run a recorded action log; raises ReplayDivergence on mismatch."""
    state = init(inst, seed, horizon, mode, preempt_restart=preempt_restart)
    idx = 0
    while True:
        out = state.advance()
        if isinstance(out, Terminal):
            if idx != len(action_log):
                raise ReplayDivergence(idx, "run ended with actions left in the log")
            return state
        if idx >= len(action_log):
            raise ReplayDivergence(idx, "log exhausted before the run ended")
        action = tuple(action_log[idx])
        try:
            state.apply_action(out, action)
        except IllegalActionError as exc:
            raise ReplayDivergence(idx, str(exc)) from exc
        idx += 1
