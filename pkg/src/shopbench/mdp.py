"""Agent-facing environments over the simulation core.

A breakdown choice decides which decision kinds the agent sees; the
observation spec picks raw state matrices and/or condensed features; the
action spec picks direct choices or priority-rule selection; the reward
spec shapes the scalar feedback. Everything else is relayed untouched from
the engine, so an environment trajectory is exactly an engine trajectory.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import notation, objectives, planning, simcore
from .errors import ConfigError, IllegalActionError, SimulationError
from .instance import Instance
from .notation import ObjectiveSpec, ParetoObjective, Tag
from .simcore import DecisionPoint, SimMode, SimState, Terminal

PROTOCOL_VERSION = 1


# ---------------------------------------------------------------------------
# breakdowns


@dataclass(frozen=True)
class BreakdownKind:
    name: str
    triggers: frozenset = frozenset()  # re-scheduling only


OPERATION_SEQUENCING = BreakdownKind("operation_sequencing")
ROUTING_BEFORE_SEQUENCING = BreakdownKind("routing_before_sequencing")
INTERLACED_ROUTING_SEQUENCING = BreakdownKind("interlaced_routing_sequencing")
TRANSPORT_CENTRIC_ROUTING = BreakdownKind("transport_centric_routing")
HOLISTIC_ROUTING_SEQUENCING = BreakdownKind("holistic_routing_sequencing")


def re_scheduling(*triggers: str) -> BreakdownKind:
    """Plan-following control; the agent re-parameterizes the scheduler
    whenever one of the trigger event kinds fires."""
    return BreakdownKind("re_scheduling",
                         frozenset(triggers or ("job_release", "breakdown_start")))


_BREAKDOWNS_BY_NAME = {
    b.name: b for b in (OPERATION_SEQUENCING, ROUTING_BEFORE_SEQUENCING,
                        INTERLACED_ROUTING_SEQUENCING, TRANSPORT_CENTRIC_ROUTING,
                        HOLISTIC_ROUTING_SEQUENCING)
}


def breakdown_by_name(name: str, triggers=()) -> BreakdownKind:
    if name == "re_scheduling":
        return re_scheduling(*triggers)
    if name in _BREAKDOWNS_BY_NAME:
        return _BREAKDOWNS_BY_NAME[name]
    raise ConfigError(f"unknown breakdown {name!r}")


def mode_for(breakdown: BreakdownKind, inst: Instance,
             internal_seq_rule: str = "FIFO") -> SimMode:
    """Engine control mode realizing a breakdown on this instance."""
    tags = inst.triplet.tags()
    has_transport = inst.transport.mode != "none"
    flexible = notation.has_routing_flexibility(inst.triplet)
    name = breakdown.name

    if name == "operation_sequencing":
        routing = "rule:SQ" if has_transport else "virtual"
        return SimMode(sequencing="agent", routing=routing, transport="auto")
    if name == "routing_before_sequencing":
        if not flexible:
            raise ConfigError("routing-before-sequencing needs routing flexibility")
        return SimMode(sequencing="agent", routing="at_release", transport="auto")
    if name == "interlaced_routing_sequencing":
        if not flexible:
            raise ConfigError("interlaced routing and sequencing needs routing flexibility")
        return SimMode(sequencing="agent", routing="on_completion", transport="auto")
    if name == "transport_centric_routing":
        if Tag.TR_N not in tags:
            raise ConfigError("transport-centric control needs a scarce fleet tr(n)")
        return SimMode(sequencing=f"rule:{internal_seq_rule}", routing="transport",
                       transport="agent")
    if name == "holistic_routing_sequencing":
        if Tag.TR_N not in tags:
            raise ConfigError("holistic control needs a scarce fleet tr(n)")
        return SimMode(sequencing="agent", routing="transport", transport="agent")
    if name == "re_scheduling":
        return SimMode(sequencing="plan", routing="plan", transport="auto",
                       reschedule_triggers=breakdown.triggers)
    raise ConfigError(f"unknown breakdown {breakdown!r}")


# ---------------------------------------------------------------------------
# observations


class FeatureId(enum.Enum):
    REMAINING_JOB_OPS = "remaining_job_ops"
    REMAINING_JOB_PROCESSING_TIME = "remaining_job_processing_time"
    JOBS_IN_SYSTEM = "jobs_in_system"
    BUFFER_REMAINING_TIME = "buffer_remaining_time"
    RESOURCE_WORKLOAD = "resource_workload"
    REMAINING_VS_BUFFERED_RATIO = "remaining_vs_buffered_ratio"
    PRODUCT_TYPES_IN_BUFFER = "product_types_in_buffer"
    ESTIMATED_TOTAL_TARDINESS = "estimated_total_tardiness"
    AVG_MACHINE_UTILIZATION = "avg_machine_utilization"
    AVG_TRANSPORT_UTILIZATION = "avg_transport_utilization"
    AVG_BUFFER_LENGTH = "avg_buffer_length"


@dataclass(frozen=True)
class ObsSpec:
    raw: bool = False
    features: tuple[FeatureId, ...] = ()


@dataclass
class RawObservation:
    """Matrix view of the whole shop: per job row and operation column,
    the needed work-center type T, remaining processing time P, current
    location L (machine id or -1) and an active flag A, plus the clock and
    the resource asking for a decision. Rows are padded to the widest job
    with type -1 / time 0."""

    T: list[list[int]]
    P: list[list[float]]
    L: list[list[int]]
    A: list[list[bool]]
    t: float
    i: int

    def to_dict(self) -> dict:
        return {"T": self.T, "P": self.P, "L": self.L,
                "A": [[bool(v) for v in row] for row in self.A],
                "t": self.t, "i": self.i}


def _remaining_time(state: SimState, job: int, op: int) -> float:
    key = (job, op)
    if op in state.done_ops[job]:
        return 0.0
    mid = state.op_machine.get(key)
    if mid is not None and op in state.dispatched[job]:
        m = state.machines[mid]
        if m.current and key in m.current:
            if m.phase == "proc":
                return m.remaining if m.frozen else m.phase_end - state.clock
            return state.realized_duration(job, op, mid)  # still in setup
    o = state.op_obj(job, op)
    return o.base_duration * state.realized_mult[key]


def observe_raw(state: SimState, requesting: int = -1) -> RawObservation:
    inst = state.inst
    width = inst.max_ops
    location: dict[tuple[int, int], int] = {}
    active: set[tuple[int, int]] = set()
    for mid, m in state.machines.items():
        for item in m.input_buf + m.output_buf:
            location[item.key()] = mid
        if m.held is not None:
            location[m.held.key()] = mid
        for key in m.current:
            location[key] = mid
            active.add(key)
    T, P, L, A = [], [], [], []
    for job in inst.jobs:
        t_row, p_row, l_row, a_row = [], [], [], []
        for k in range(width):
            if k >= len(job.operations):
                t_row.append(-1)
                p_row.append(0.0)
                l_row.append(-1)
                a_row.append(False)
                continue
            key = (job.job_id, k)
            t_row.append(job.operations[k].op_type)
            p_row.append(_remaining_time(state, job.job_id, k))
            if key in location:
                l_row.append(location[key])
            elif k in state.done_ops[job.job_id]:
                l_row.append(state.op_machine.get(key, -1))
            else:
                l_row.append(-1)
            a_row.append(key in active and state.machines[location[key]].phase == "proc")
        T.append(t_row)
        P.append(p_row)
        L.append(l_row)
        A.append(a_row)
    return RawObservation(T=T, P=P, L=L, A=A, t=state.clock, i=requesting)


def compute_features(state: SimState, ids: list[FeatureId]) -> list[float]:
    """Feature vector; per-machine features contribute one entry per
    machine in id order.

    Formulas: remaining_job_ops = unfinished operation count;
    remaining_job_processing_time = total remaining work;
    jobs_in_system = released unfinished jobs; buffer_remaining_time =
    total buffered work; resource_workload[i] = buffered work at machine i;
    remaining_vs_buffered_ratio = in-process remaining over buffered work;
    product_types_in_buffer[i] = distinct types queued at machine i;
    estimated_total_tardiness = sum of max(0, eta - due) with eta = C_j
    when finished else t + remaining_j; avg_machine_utilization = mean
    busy share so far; avg_transport_utilization = mean loaded share;
    avg_buffer_length = mean time-averaged queue length.
    """
    out: list[float] = []
    inst = state.inst
    t = state.clock
    mids = sorted(state.machines)
    for fid in ids:
        if fid is FeatureId.REMAINING_JOB_OPS:
            out.append(float(sum(
                len(j.operations) - len(state.done_ops[j.job_id]) for j in inst.jobs)))
        elif fid is FeatureId.REMAINING_JOB_PROCESSING_TIME:
            out.append(sum(_remaining_time(state, j.job_id, op.op_index)
                           for j in inst.jobs for op in j.operations))
        elif fid is FeatureId.JOBS_IN_SYSTEM:
            out.append(float(sum(
                1 for j in inst.jobs
                if j.job_id in state.released and not state.job_finished(j.job_id))))
        elif fid is FeatureId.BUFFER_REMAINING_TIME:
            out.append(sum(state.input_work(mid) for mid in mids))
        elif fid is FeatureId.RESOURCE_WORKLOAD:
            out.extend(state.input_work(mid) for mid in mids)
        elif fid is FeatureId.REMAINING_VS_BUFFERED_RATIO:
            active = sum(_remaining_time(state, key[0], key[1])
                         for mid in mids for key in state.machines[mid].current)
            buffered = sum(state.input_work(mid) for mid in mids)
            out.append(active / buffered if buffered > 0 else 0.0)
        elif fid is FeatureId.PRODUCT_TYPES_IN_BUFFER:
            for mid in mids:
                types = {state.op_obj(i.job, i.op).op_type
                         for i in state.machines[mid].input_buf}
                out.append(float(len(types)))
        elif fid is FeatureId.ESTIMATED_TOTAL_TARDINESS:
            total = 0.0
            for j in inst.jobs:
                if j.due is None:
                    continue
                if state.job_finished(j.job_id):
                    eta = state.completion[j.job_id]
                else:
                    remaining = sum(_remaining_time(state, j.job_id, op.op_index)
                                    for op in j.operations)
                    eta = t + remaining
                total += max(0.0, eta - j.due)
            out.append(total)
        elif fid is FeatureId.AVG_MACHINE_UTILIZATION:
            if t <= 0:
                out.append(0.0)
            else:
                shares = []
                for mid in mids:
                    m = state.machines[mid]
                    busy = sum(e - s for s, e in m.busy_log)
                    if m.phase == "proc" and not m.frozen:
                        busy += t - m.proc_started
                    shares.append(busy / t)
                out.append(sum(shares) / len(shares))
        elif fid is FeatureId.AVG_TRANSPORT_UTILIZATION:
            if not state.vehicles and not state._synthetic_loads:
                raise ConfigError("transport utilization feature needs transport")
            if t <= 0:
                out.append(0.0)
            else:
                shares = []
                for v in state.vehicles:
                    loaded = sum(e - s for s, e in v.loaded_log)
                    if v.loaded_since is not None:
                        loaded += t - v.loaded_since
                    shares.append(loaded / t)
                if state._synthetic_loads:
                    shares.append(sum(e - s for s, e in state._synthetic_loads) / t)
                out.append(sum(shares) / len(shares))
        elif fid is FeatureId.AVG_BUFFER_LENGTH:
            if t <= 0:
                out.append(0.0)
            else:
                avgs = [objectives._series_time_average(
                    state.machines[mid].buffer_series, t) for mid in mids]
                out.append(sum(avgs) / len(avgs))
        else:
            raise ConfigError(f"unknown feature {fid!r}")
    return out


# ---------------------------------------------------------------------------
# actions and rewards


@dataclass(frozen=True)
class ActionSpec:
    """Direct choices or rule selection.

    Direct codes: sequencing uses the flat operation index job*width+op,
    with defer = n*width and batch = n*width+1; routing and transport
    decisions use the machine id; a re-scheduling action is a parameter
    list for the scheduler hook. Rule mode codes index the rule lists.
    """

    mode: str = "direct"  # direct | rules
    seq_rules: tuple[str, ...] = ("SPT", "LPT", "EDD", "FIFO", "LIFO")
    route_rules: tuple[str, ...] = ("SQ", "LQE", "SST")
    allow_defer: bool = True  # False restricts direct control to non-delay moves

    def __post_init__(self):
        if self.mode not in ("direct", "rules"):
            raise ConfigError(f"unknown action mode {self.mode!r}")
        if self.mode == "rules" and (not self.seq_rules or not self.route_rules):
            raise ConfigError("rule selection needs nonempty rule lists")


@dataclass(frozen=True)
class RewardSpec:
    shaping: str = "terminal_objective"  # terminal_objective | dense_delta | queue_length_proxy
    objective: ObjectiveSpec | None = None  # defaults to the instance objective

    def __post_init__(self):
        if self.shaping not in ("terminal_objective", "dense_delta", "queue_length_proxy"):
            raise ConfigError(f"unknown reward shaping {self.shaping!r}")


def objective_to_date(state: SimState, objective: ObjectiveSpec) -> float:
    """Objective over the finished portion of the run; 0 before anything
    finishes. Coincides with the true objective at a successful terminal."""
    finished = [j for j in state.inst.jobs if state.job_finished(j.job_id)]
    if not finished:
        return 0.0
    rec = state.schedule_record()
    keep = {j.job_id for j in finished}
    rec.jobs = [j for j in rec.jobs if j.job_id in keep]
    t = state.clock if state.clock > 0 else 1.0
    try:
        return float(objectives.evaluate_objective(rec, objective, t))
    except objectives.MetricUnavailable:
        return 0.0


def reward_of(prev: SimState | float, next_state: SimState, spec: RewardSpec,
              queue_len: int = 0) -> float:
    """Reward for the transition; rewards are negated costs.

    terminal_objective: 0 until the run ends, then minus the objective.
    dense_delta: minus the change in objective-to-date (telescopes to the
    terminal objective for additive metrics). queue_length_proxy: minus
    the queue length at the acting machine.
    """
    objective = spec.objective or next_state.inst.triplet.gamma
    if spec.shaping == "queue_length_proxy":
        return -float(queue_len)
    if spec.shaping == "terminal_objective":
        if next_state.terminal is not None:
            rec = next_state.schedule_record()
            t = next_state.clock if next_state.clock > 0 else 1.0
            try:
                return -float(objectives.evaluate_objective(rec, objective, t))
            except objectives.MetricUnavailable:
                return 0.0  # truncated/deadlocked run without a computable value
        return 0.0
    # dense_delta; prev may be a pre-computed objective-to-date scalar
    before = prev if isinstance(prev, float) else objective_to_date(prev, objective)
    after = objective_to_date(next_state, objective)
    return -(after - before)


# ---------------------------------------------------------------------------
# the environment


class Env:
    """reset/step environment with integer (or parameter-list) actions."""

    def __init__(self, inst: Instance, breakdown: BreakdownKind,
                 obs: ObsSpec, act: ActionSpec, rew: RewardSpec, seed: int,
                 horizon: float | None = None, illegal: str = "error",
                 illegal_penalty: float = -1.0, internal_seq_rule: str = "FIFO",
                 scheduler_callback=None, record_trace: bool = True):
        self.inst = inst
        self.breakdown = breakdown
        self.obs_spec = obs
        self.action_spec = act
        self.reward_spec = rew
        self.seed = seed
        self.horizon = horizon
        if illegal not in ("error", "penalize"):
            raise ConfigError(f"unknown illegal-action policy {illegal!r}")
        self.illegal = illegal
        self.illegal_penalty = illegal_penalty
        self.internal_seq_rule = internal_seq_rule
        self.record_trace = record_trace
        self.sim_mode = mode_for(breakdown, inst, internal_seq_rule)
        objective = rew.objective or inst.triplet.gamma
        if rew.shaping != "queue_length_proxy" and isinstance(objective, ParetoObjective):
            raise ConfigError("scalar reward shaping cannot follow a pareto objective")
        if breakdown.name == "re_scheduling":
            self.scheduler_callback = scheduler_callback or default_scheduler_callback
        else:
            self.scheduler_callback = scheduler_callback
        self.sim: SimState | None = None
        self.current_dp: DecisionPoint | None = None
        self._width = max(1, inst.max_ops)
        self._initial_work = sum(op.base_duration for j in inst.jobs
                                 for op in j.operations)

    # -- lifecycle ----------------------------------------------------

    def reset(self):
        self.sim = simcore.init(self.inst, self.seed, self.horizon, self.sim_mode,
                                record_trace=self.record_trace)
        self.sim._scheduler_callback = self.scheduler_callback
        out = self.sim.advance()
        return self._emit(out, reward=0.0)[:2]  # (obs, info)

    def step(self, action):
        if self.sim is None:
            raise SimulationError("call reset before step")
        if self.sim.terminal is not None:
            raise SimulationError("episode finished; call reset")
        dp = self.current_dp
        queue_len = 0
        if dp.kind == "sequencing":
            queue_len = sum(1 for a in dp.legal_actions if a[0] in ("start", "batch"))
        illegal_hit = False
        try:
            structured = self._decode(dp, action)
        except IllegalActionError:
            if self.illegal == "error":
                raise
            illegal_hit = True
            structured = dp.legal_actions[0]
        prev_otd = None
        if self.reward_spec.shaping == "dense_delta":
            objective = self.reward_spec.objective or self.inst.triplet.gamma
            prev_otd = objective_to_date(self.sim, objective)
        try:
            self.sim.apply_action(dp, structured)
        except IllegalActionError:
            if self.illegal == "error":
                raise
            illegal_hit = True
            self.sim.apply_action(dp, dp.legal_actions[0])
        out = self.sim.advance()
        obs, info, reward, done = self._emit(out, reward=0.0, prev_otd=prev_otd,
                                             queue_len=queue_len, full=True)
        if illegal_hit:
            reward += self.illegal_penalty
            info["illegal_action"] = True
        return obs, reward, done, info

    def replay_actions(self, actions: list) -> SimState:
        """Fresh run driven by a recorded action log (bitwise comparable)."""
        state = simcore.init(self.inst, self.seed, self.horizon, self.sim_mode,
                             record_trace=True)
        state._scheduler_callback = self.scheduler_callback
        idx = 0
        while True:
            out = state.advance()
            if isinstance(out, Terminal):
                if idx != len(actions):
                    from .errors import ReplayDivergence
                    raise ReplayDivergence(idx, "run ended with actions left in the log")
                return state
            if idx >= len(actions):
                from .errors import ReplayDivergence
                raise ReplayDivergence(idx, "log exhausted before the run ended")
            state.apply_action(out, tuple(actions[idx]))
            idx += 1

    # -- encoding -----------------------------------------------------

    def _decode(self, dp: DecisionPoint, action):
        """Map an external action (int code or parameter list) onto one of
        the decision point's structured legal actions."""
        if dp.kind == "reschedule":
            if isinstance(action, (list, tuple)):
                return ("plan", *action)
            if self.action_spec.mode == "rules":
                rules = self.action_spec.seq_rules
                if not isinstance(action, int) or not 0 <= action < len(rules):
                    raise IllegalActionError(action, list(range(len(rules))))
                return ("plan", rules[action])
            return ("plan",) if action in (0, None) else ("plan", action)

        if self.action_spec.mode == "rules":
            return self._decode_rule(dp, action)

        legal = dp.legal_actions
        if dp.kind == "sequencing":
            for a in legal:
                if a[0] == "start" and a[1] * self._width + a[2] == action:
                    return a
            if (action == self.inst.n_jobs * self._width and ("defer",) in legal
                    and self.action_spec.allow_defer):
                return ("defer",)
            if action == self.inst.n_jobs * self._width + 1 and ("batch",) in legal:
                return ("batch",)
            raise IllegalActionError(action, self.legal_codes(dp))
        for a in legal:
            if a[1] == action:
                return a
        raise IllegalActionError(action, self.legal_codes(dp))

    def _decode_rule(self, dp: DecisionPoint, action):
        sim = self.sim
        if dp.kind == "sequencing":
            rules = self.action_spec.seq_rules
        else:
            rules = self.action_spec.route_rules
        if not isinstance(action, int) or not 0 <= action < len(rules):
            raise IllegalActionError(action, list(range(len(rules))))
        rule = rules[action]
        if dp.kind == "sequencing":
            starts = [a for a in dp.legal_actions if a[0] == "start"]
            if not starts:  # batch machines expose a single collective start
                return dp.legal_actions[0]
            best = min(starts, key=lambda a: sim.seq_rule_key(
                rule, dp.machine_id, (a[1], a[2]), self._since_of(dp, a)))
            return best
        if dp.kind in ("routing", "transport_destination"):
            return min(dp.legal_actions,
                       key=lambda a: sim.route_rule_key(rule, dp.job_id, a[1]))
        if dp.kind == "transport_source":
            return min(dp.legal_actions,
                       key=lambda a: sim.source_rule_key(rule, a[1]))
        raise IllegalActionError(action, dp.legal_actions)

    def _since_of(self, dp: DecisionPoint, action) -> float:
        for item in self.sim.sequencing_candidates(dp.machine_id):
            if item.key() == (action[1], action[2]):
                return item.since
        return 0.0

    def _code_of(self, action) -> int | None:
        if action[0] == "start":
            return action[1] * self._width + action[2]
        if action[0] == "defer":
            if not self.action_spec.allow_defer:
                return None
            return self.inst.n_jobs * self._width
        if action[0] == "batch":
            return self.inst.n_jobs * self._width + 1
        if action[0] == "plan":
            return 0
        return action[1]

    def legal_codes(self, dp: DecisionPoint) -> list:
        if self.action_spec.mode == "rules":
            n = (len(self.action_spec.seq_rules) if dp.kind in ("sequencing", "reschedule")
                 else len(self.action_spec.route_rules))
            return list(range(n))
        return [c for c in (self._code_of(a) for a in dp.legal_actions)
                if c is not None]

    # -- observation assembly ------------------------------------------

    def _emit(self, out, reward: float, prev_otd=None, queue_len: int = 0,
              full: bool = False):
        sim = self.sim
        done = isinstance(out, Terminal)
        self.current_dp = None if done else out
        requesting = -1 if done else out.machine_id
        obs: dict = {"t": sim.clock}
        if self.obs_spec.raw:
            obs["raw"] = observe_raw(sim, requesting).to_dict()
        if self.obs_spec.features:
            obs["features"] = compute_features(sim, list(self.obs_spec.features))
        info: dict = {"t": sim.clock}
        if done:
            info["terminal"] = out.kind
            info["diagnostic"] = out.diagnostic
            info["trace_digest"] = sim.trace_digest()
            rec = sim.schedule_record()
            objective = self.reward_spec.objective or self.inst.triplet.gamma
            try:
                t = sim.clock if sim.clock > 0 else 1.0
                value = objectives.evaluate_objective(rec, objective, t)
                info["objective"] = list(value) if isinstance(value, tuple) else value
            except objectives.MetricUnavailable as exc:
                info["objective"] = None
                info["objective_error"] = str(exc)
            info["legal"] = []
            info["candidates"] = []
        else:
            info.update({
                "kind": out.kind,
                "machine": out.machine_id,
                "vehicle": out.vehicle_id,
                "job": out.job_id,
                "op": out.op_index,
                "trigger": out.trigger,
                "legal": self.legal_codes(out),
                "action_mode": self.action_spec.mode,
                "stochastic_events": sim.stochastic_event_count,
            })
            if self.action_spec.mode == "rules":
                info["seq_rules"] = list(self.action_spec.seq_rules)
                info["route_rules"] = list(self.action_spec.route_rules)
            remaining = sum(_remaining_time(sim, j.job_id, op.op_index)
                            for j in self.inst.jobs for op in j.operations)
            info["remaining_ratio"] = (remaining / self._initial_work
                                       if self._initial_work > 0 else 0.0)
            cands = sim.decision_context(out)
            kept = []
            for cand, action in zip(cands, out.legal_actions):
                if self.action_spec.mode == "direct":
                    code = self._code_of(action)
                    if code is None:
                        continue  # defer disabled by the action spec
                    cand["code"] = code
                kept.append(cand)
            info["candidates"] = kept
        if full:
            if self.reward_spec.shaping == "dense_delta":
                reward = -(objective_to_date(
                    sim, self.reward_spec.objective or self.inst.triplet.gamma) - prev_otd)
            elif self.reward_spec.shaping == "queue_length_proxy":
                reward = -float(queue_len)
            elif done:
                reward = reward_of(0.0, sim, self.reward_spec)
            else:
                reward = 0.0
            return obs, info, reward, done
        return obs, info, reward, done


def default_scheduler_callback(state: SimState, params: tuple):
    """List-schedule the residual problem; params may name the rule."""
    rule = params[0] if params else "SPT"
    return planning.list_schedule(planning.projection_from_state(state), str(rule))


def make_env(inst: Instance, breakdown: BreakdownKind, obs: ObsSpec | None = None,
             act: ActionSpec | None = None, rew: RewardSpec | None = None,
             seed: int = 0, horizon: float | None = None, **kwargs) -> Env:
    """Bundle an instance with observation, action and reward builders."""
    return Env(inst, breakdown, obs or ObsSpec(), act or ActionSpec(),
               rew or RewardSpec(), seed, horizon, **kwargs)


# ---------------------------------------------------------------------------
# environment construction from a config mapping (CLI / wire server)


def env_from_config(cfg: dict, base_dir: str = ".") -> Env:
    import os

    from . import instance as instance_mod

    src = cfg.get("instance")
    if isinstance(src, str):
        path = src if os.path.isabs(src) else os.path.join(base_dir, src)
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if path.endswith(".json"):
            inst = instance_mod.deserialize_instance(text)
        else:
            inst = instance_mod.load_orlib(text)
    elif isinstance(src, dict):
        inst = instance_mod.instance_from_dict(src)
    else:
        raise ConfigError("env config needs an 'instance' path or object")

    breakdown = breakdown_by_name(cfg.get("breakdown", "operation_sequencing"),
                                  cfg.get("triggers", ()))
    ob = cfg.get("obs", {})
    obs = ObsSpec(raw=bool(ob.get("raw", False)),
                  features=tuple(FeatureId(f) for f in ob.get("features", ())))
    ac = cfg.get("action", {})
    act = ActionSpec(mode=ac.get("mode", "direct"),
                     seq_rules=tuple(ac.get("seq_rules", ("SPT", "LPT", "EDD", "FIFO", "LIFO"))),
                     route_rules=tuple(ac.get("route_rules", ("SQ", "LQE", "SST"))))
    rw = cfg.get("reward", {})
    objective = (notation.parse_triplet(f"Jm||{rw['objective']}").gamma
                 if rw.get("objective") else None)
    rew = RewardSpec(shaping=rw.get("shaping", "terminal_objective"), objective=objective)
    if "seed" not in cfg:
        raise ConfigError("env config needs an explicit seed")
    return make_env(inst, breakdown, obs, act, rew, seed=int(cfg["seed"]),
                    horizon=cfg.get("horizon"),
                    illegal=cfg.get("illegal", "error"),
                    illegal_penalty=float(cfg.get("illegal_penalty", -1.0)),
                    internal_seq_rule=cfg.get("internal_seq_rule", "FIFO"))


def env_spec_payload(env: Env) -> dict:
    """Machine-readable environment descriptor for wire clients."""
    inst = env.inst
    if env.action_spec.mode == "rules":
        action_space = {
            "mode": "rules",
            "seq_rules": list(env.action_spec.seq_rules),
            "route_rules": list(env.action_spec.route_rules),
        }
    else:
        action_space = {
            "mode": "direct",
            "sequencing_codes": inst.n_jobs * env._width + 2,
            "machine_codes": inst.n_machines,
        }
    return {
        "protocol": PROTOCOL_VERSION,
        "breakdown": env.breakdown.name,
        "triggers": sorted(env.breakdown.triggers),
        "action_space": action_space,
        "observation": {
            "raw": env.obs_spec.raw,
            "features": [f.value for f in env.obs_spec.features],
            "n_jobs": inst.n_jobs,
            "max_ops": inst.max_ops,
            "n_machines": inst.n_machines,
        },
        "reward": {
            "shaping": env.reward_spec.shaping,
            "objective": (env.reward_spec.objective or inst.triplet.gamma).render(),
        },
        "seed": env.seed,
        "horizon": env.horizon,
        "triplet": inst.triplet.render(),
    }
