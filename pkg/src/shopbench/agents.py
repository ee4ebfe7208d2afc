"""Baseline and tabular-learning agents, plus an exact search oracle.

Agents act through an Env: `act(obs, info)` returns an action code. Rule
agents read only the candidate metadata in `info`; plan-following agents
additionally consult the engine state they are given at `begin` (they are
white-box baselines, not learners).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

from . import mdp, planning, simcore
from .errors import ConfigError, SearchCapExceeded, SimulationError
from .instance import Instance
from .mdp import Env
from .notation import ObjectiveSpec
from .objectives import evaluate_objective
from .rng import RngStream
from .simcore import Terminal


class Agent:
    name = "agent"

    def begin(self, env: Env) -> None:
        """Called once per episode before the first decision."""

    def act(self, obs, info):
        raise NotImplementedError

    def observe(self, transition) -> None:
        """Optional learning hook; transition is (obs, info, action, reward,
        next_obs, next_info, done)."""


@dataclass
class EpisodeResult:
    objective: float | tuple | None
    terminal: str
    steps: int
    trace_digest: str
    actions: list
    clock: float
    info: dict


def run_episode(env: Env, agent: Agent, max_steps: int = 1000000) -> EpisodeResult:
    obs, info = env.reset()
    agent.begin(env)
    steps = 0
    if "terminal" in info:  # nothing to decide at all
        return EpisodeResult(info.get("objective"), info["terminal"], 0,
                             info["trace_digest"], list(env.sim.action_log),
                             env.sim.clock, info)
    while True:
        action = agent.act(obs, info)
        next_obs, reward, done, next_info = env.step(action)
        agent.observe((obs, info, action, reward, next_obs, next_info, done))
        obs, info = next_obs, next_info
        steps += 1
        if done:
            return EpisodeResult(info.get("objective"), info["terminal"], steps,
                                 info["trace_digest"], list(env.sim.action_log),
                                 env.sim.clock, info)
        if steps >= max_steps:
            raise SimulationError(f"episode exceeded {max_steps} steps")


# ---------------------------------------------------------------------------
# priority-rule agents


def _seq_candidate_key(rule: str, cand: dict):
    if rule == "SPT":
        k = cand["duration"]
    elif rule == "LPT":
        k = -cand["duration"]
    elif rule == "EDD":
        k = cand["due"] if cand["due"] is not None else float("inf")
    elif rule == "FIFO":
        k = cand["since"]
    elif rule == "LIFO":
        k = -cand["since"]
    else:
        raise ConfigError(f"unknown sequencing rule {rule!r}")
    return (k, cand["job"], cand["op"])


def _route_candidate_key(rule: str, cand: dict):
    if rule == "SQ":
        k = cand["queue_work"]
    elif rule == "LQE":
        k = float(cand["queue_len"])
    elif rule == "SST":
        k = cand["setup"]
    else:
        raise ConfigError(f"unknown routing rule {rule!r}")
    return (k, cand["machine"])


def _source_candidate_key(rule: str, cand: dict):
    if rule == "SQ":
        k = -cand["waiting_work"]
    elif rule == "LQE":
        k = -float(cand["waiting_len"])
    else:
        k = cand["oldest_since"]
    return (k, cand["machine"])


class RuleAgent(Agent):
    """Fixed dispatching; never defers."""

    def __init__(self, seq_rule: str = "SPT", route_rule: str = "SQ"):
        self.seq_rule = seq_rule
        self.route_rule = route_rule
        self.name = f"rule:{seq_rule}" + ("" if route_rule == "SQ" else f"/{route_rule}")

    def act(self, obs, info):
        kind = info["kind"]
        if info.get("action_mode") == "rules":
            rules = info["seq_rules"] if kind in ("sequencing", "reschedule") \
                else info["route_rules"]
            wanted = self.seq_rule if kind in ("sequencing", "reschedule") \
                else self.route_rule
            if wanted not in rules:
                raise ConfigError(f"{wanted} is not in the environment's rule list")
            return rules.index(wanted)
        cands = info["candidates"]
        if kind == "sequencing":
            starts = [c for c in cands if "job" in c]
            if not starts:  # batch machine: the collective start is the move
                return info["legal"][0]
            best = min(starts, key=lambda c: _seq_candidate_key(self.seq_rule, c))
            return best["code"]
        if kind in ("routing", "transport_destination"):
            best = min(cands, key=lambda c: _route_candidate_key(self.route_rule, c))
            return best["code"]
        if kind == "transport_source":
            best = min(cands, key=lambda c: _source_candidate_key(self.route_rule, c))
            return best["code"]
        if kind == "reschedule":
            return [self.seq_rule]
        raise ConfigError(f"rule agent cannot act on {kind!r}")


class RandomAgent(Agent):
    """Uniform over the legal codes, from a dedicated seeded stream."""

    def __init__(self, seed: int):
        self.rng = RngStream(seed, "agent-exploration")
        self.name = "random"

    def act(self, obs, info):
        return self.rng.choice(info["legal"])


class FixedRuleSelector(Agent):
    """Always emits the same rule index (for rule-selection action spaces)."""

    def __init__(self, index: int, name: str = "fixed-rule"):
        self.index = index
        self.name = name

    def act(self, obs, info):
        return self.index


# ---------------------------------------------------------------------------
# plan-following baselines


class StaticPlanAgent(Agent):
    """Schedules once on the deterministic projection and follows that plan,
    ignoring every deviation. Falls back to FIFO when the plan cannot be
    followed at a decision (and logs it)."""

    def __init__(self, rule: str = "SPT"):
        self.rule = rule
        self.name = f"static:{rule}"
        self.plan: planning.Plan | None = None
        self.fallbacks = 0
        self._env: Env | None = None

    def begin(self, env: Env) -> None:
        self._env = env
        self.plan = planning.list_schedule(
            planning.projection_from_instance(env.inst), self.rule)
        self.fallbacks = 0

    def _replan(self) -> None:
        pass  # static: never

    def act(self, obs, info):
        kind = info["kind"]
        sim = self._env.sim
        cands = info["candidates"]
        if kind == "sequencing":
            starts = [c for c in cands if "job" in c]
            if not starts:
                return info["legal"][0]
            mid = info["machine"]
            planned = self._next_planned(sim, mid)
            if planned is not None:
                for c in starts:
                    if (c["job"], c["op"]) == planned:
                        return c["code"]
                defer = self._defer_code(info)
                if defer is not None:
                    return defer  # hold for the planned operation
            self.fallbacks += 1
            return min(starts, key=lambda c: _seq_candidate_key("FIFO", c))["code"]
        if kind == "routing":
            want = self.plan.assignment.get((info["job"], info["op"]))
            for c in cands:
                if c["machine"] == want:
                    return c["code"]
            self.fallbacks += 1
            return min(cands, key=lambda c: _route_candidate_key("SQ", c))["code"]
        if kind == "transport_destination":
            want = self.plan.assignment.get((info["job"], info["op"]))
            for c in cands:
                if c["machine"] == want:
                    return c["code"]
            return min(cands, key=lambda c: _route_candidate_key("SQ", c))["code"]
        if kind == "transport_source":
            return min(cands, key=lambda c: _source_candidate_key("SQ", c))["code"]
        if kind == "reschedule":
            return [self.rule]
        raise ConfigError(f"plan agent cannot act on {kind!r}")

    def _next_planned(self, sim, mid: int):
        for key in self.plan.sequences.get(mid, []):
            job, op = key
            if op in sim.done_ops[job] or op in sim.dispatched[job]:
                continue
            return key
        return None

    def _defer_code(self, info):
        env = self._env
        defer_code = env.inst.n_jobs * env._width
        if env.action_spec.mode == "direct" and defer_code in info["legal"]:
            return defer_code
        return None


class RecomputeAgent(StaticPlanAgent):
    """Rebuilds the plan from the live state after every stochastic event."""

    def __init__(self, rule: str = "SPT"):
        super().__init__(rule)
        self.name = f"recompute:{rule}"
        self.replans = 0
        self._seen_events = 0

    def begin(self, env: Env) -> None:
        super().begin(env)
        self.replans = 0
        self._seen_events = 0

    def act(self, obs, info):
        count = info.get("stochastic_events", 0)
        if count > self._seen_events:
            self._seen_events = count
            self.plan = planning.list_schedule(
                planning.projection_from_state(self._env.sim), self.rule)
            self.replans += 1
        return super().act(obs, info)


# ---------------------------------------------------------------------------
# tabular value learning


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.2
    discount: float = 1.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.8  # share of episodes spent decaying
    table_cap: int = 200000

    def epsilon(self, episode: int, episodes: int) -> float:
        cut = max(1, int(episodes * self.epsilon_decay_fraction))
        if episode >= cut:
            return self.epsilon_end
        frac = episode / cut
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass
class QTable:
    """Sparse state-action values keyed by discretized state tuples."""

    values: dict = field(default_factory=dict)  # key -> {code: value}
    visits: dict = field(default_factory=dict)
    algo: str = "ql"
    hp: Hyperparams = field(default_factory=Hyperparams)

    def q(self, key, code) -> float:
        return self.values.get(key, {}).get(code, 0.0)

    def greedy(self, key, legal: list):
        row = self.values.get(key, {})
        best_val = max((row.get(c, 0.0) for c in legal), default=0.0)
        for c in legal:  # lowest code wins ties
            if row.get(c, 0.0) == best_val:
                return c
        return legal[0]

    def update(self, key, code, delta: float) -> None:
        row = self.values.setdefault(key, {})
        row[code] = row.get(code, 0.0) + delta
        self.visits[key] = self.visits.get(key, 0) + 1

    def to_json(self) -> str:
        payload = {
            "version": 1,
            "algo": self.algo,
            "hp": {
                "learning_rate": self.hp.learning_rate,
                "discount": self.hp.discount,
                "epsilon_start": self.hp.epsilon_start,
                "epsilon_end": self.hp.epsilon_end,
                "epsilon_decay_fraction": self.hp.epsilon_decay_fraction,
                "table_cap": self.hp.table_cap,
            },
            "entries": [
                [list(key), sorted(row.items()), self.visits.get(key, 0)]
                for key, row in sorted(self.values.items(), key=lambda kv: str(kv[0]))
            ],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "QTable":
        d = json.loads(text)
        if d.get("version") != 1:
            raise ConfigError(f"unsupported value-table version {d.get('version')!r}")
        hp = Hyperparams(**d["hp"])
        table = cls(algo=d["algo"], hp=hp)
        for key_list, row, visits in d["entries"]:
            key = tuple(key_list)
            table.values[key] = {int(c): v for c, v in row}
            table.visits[key] = visits
        return table


def default_state_key(obs, info):
    """Decision kind and machine, queue size bucket {0,1,2,3+}, and the
    remaining-work quartile."""
    queue = sum(1 for c in info.get("candidates", ()) if "job" in c)
    ratio = info.get("remaining_ratio", 0.0)
    quartile = min(3, int(ratio * 4))
    return (info.get("kind", "?"), info.get("machine", -1),
            min(queue, 3), quartile)


def raw_state_key(obs, info):
    """Exact key over the raw state matrices (needs ObsSpec(raw=True)).

    Complete for deterministic shop instances, so tabular learning can in
    principle reach the optimal policy; table size grows with the
    reachable state count, so keep instances small.
    """
    raw = obs["raw"]
    return (info.get("machine", -1), obs["t"],
            tuple(v for row in raw["P"] for v in row),
            tuple(v for row in raw["L"] for v in row),
            tuple(v for row in raw["A"] for v in row))


def feature_bins_key(feature_count: int, bins: list[list[float]]):
    """Key from binned observation features; bins[i] holds ascending cut
    points for feature i."""
    if len(bins) != feature_count:
        raise ConfigError("one cut-point list per feature is required")

    def key_fn(obs, info):
        feats = obs.get("features")
        if feats is None or len(feats) != feature_count:
            raise ConfigError("observation lacks the configured features")
        out = []
        for value, cuts in zip(feats, bins):
            idx = 0
            for cut in cuts:
                if value >= cut:
                    idx += 1
            out.append(idx)
        return tuple(out)

    return key_fn


def _train(envs, episodes: int, hp: Hyperparams, state_key, seed: int,
           algo: str) -> QTable:
    if episodes < 1:
        raise ConfigError("training needs at least one episode")
    if not isinstance(envs, (list, tuple)):
        envs = [envs]
    table = QTable(algo=algo, hp=hp)
    rng = RngStream(seed, "agent-exploration")
    warned = False

    def pick(key, legal, eps) -> int:
        if rng.random() < eps:
            return rng.choice(legal)
        return table.greedy(key, legal)

    for episode in range(episodes):
        env = envs[episode % len(envs)]
        eps = hp.epsilon(episode, episodes)
        obs, info = env.reset()
        if "terminal" in info:
            continue
        key = state_key(obs, info)
        action = pick(key, info["legal"], eps)
        while True:
            obs2, reward, done, info2 = env.step(action)
            if done:
                target = reward
                table.update(key, action,
                             hp.learning_rate * (target - table.q(key, action)))
                break
            key2 = state_key(obs2, info2)
            if algo == "ql":
                nxt = max(table.q(key2, c) for c in info2["legal"])
                action2 = pick(key2, info2["legal"], eps)
            else:  # sarsa: evaluate the action the policy will actually take
                action2 = pick(key2, info2["legal"], eps)
                nxt = table.q(key2, action2)
            target = reward + hp.discount * nxt
            table.update(key, action,
                         hp.learning_rate * (target - table.q(key, action)))
            key, action, obs, info = key2, action2, obs2, info2
        if not warned and len(table.values) > hp.table_cap:
            warnings.warn(
                f"state key space exceeded the configured cap "
                f"({len(table.values)} > {hp.table_cap}); keys look unbounded",
                RuntimeWarning)
            warned = True
    return table


def q_learning_train(env, episodes: int, hp: Hyperparams | None = None,
                     state_key=default_state_key, seed: int = 0) -> QTable:
    """Off-policy max-backup updates under an epsilon-greedy behavior policy."""
    return _train(env, episodes, hp or Hyperparams(), state_key, seed, "ql")


def sarsa_train(env, episodes: int, hp: Hyperparams | None = None,
                state_key=default_state_key, seed: int = 0) -> QTable:
    """On-policy updates: the backed-up action is the one the behavior policy
    draws for the next step."""
    return _train(env, episodes, hp or Hyperparams(), state_key, seed, "sarsa")


class TabularPolicyAgent(Agent):
    """Greedy (or epsilon-greedy) playout of a learned table."""

    def __init__(self, table: QTable, state_key=default_state_key,
                 epsilon: float = 0.0, seed: int = 0, name: str | None = None):
        self.table = table
        self.state_key = state_key
        self.epsilon = epsilon
        self.rng = RngStream(seed, "agent-exploration")
        self.name = name or table.algo

    def act(self, obs, info):
        legal = info["legal"]
        if self.epsilon > 0 and self.rng.random() < self.epsilon:
            return self.rng.choice(legal)
        return self.table.greedy(self.state_key(obs, info), legal)


# ---------------------------------------------------------------------------
# exact oracle for desk-scale instances


def _deterministic(inst: Instance) -> bool:
    s = inst.stochastic
    return (s.release is None and s.duration_factor is None
            and s.breakdowns is None and s.demand is None)


def exhaustive_oracle(inst: Instance, breakdown: mdp.BreakdownKind | None = None,
                      objective: ObjectiveSpec | None = None,
                      cap: int = 1000000) -> dict:
    """Exact minimum over every reachable action sequence.

    Depth-first over engine clones with memoization on the state hash.
    Only deterministic instances qualify; the search cap bounds visited
    decision nodes.
    """
    if not _deterministic(inst):
        raise ConfigError("the exact oracle needs a deterministic instance")
    breakdown = breakdown or mdp.OPERATION_SEQUENCING
    objective = objective or inst.triplet.gamma
    mode = mdp.mode_for(breakdown, inst)
    memo: dict[int, tuple[float, tuple]] = {}
    visited = 0

    def search(state: simcore.SimState) -> tuple[float, tuple]:
        nonlocal visited
        out = state.advance()
        if isinstance(out, Terminal):
            if out.kind != "success":
                return (float("inf"), ())
            rec = state.schedule_record()
            t = state.clock if state.clock > 0 else 1.0
            return (float(evaluate_objective(rec, objective, t)), ())
        h = state.state_hash()
        if h in memo:
            return memo[h]
        visited += 1
        if visited > cap:
            raise SearchCapExceeded(f"more than {cap} decision nodes")
        best = (float("inf"), ())
        for action in out.legal_actions:
            child = state.clone()
            child.apply_action(child.pending_dp, action)
            value, tail = search(child)
            if value < best[0]:
                best = (value, (action, *tail))
        memo[h] = best
        return best

    root = simcore.init(inst, seed=0, horizon=None, mode=mode, record_trace=False)
    value, actions = search(root)
    if value == float("inf"):
        raise SimulationError("no action sequence completes the instance")
    return {"value": value, "actions": list(actions), "nodes": visited}


# ---------------------------------------------------------------------------
# registry for config strings


def make_agent(spec: str, seed: int) -> Agent:
    """Agents from config strings: rule:SPT, rule:EDD/LQE, random,
    static:SPT, recompute:FIFO, fixed:2."""
    if spec == "random":
        return RandomAgent(seed)
    head, _, arg = spec.partition(":")
    if head == "rule":
        seq, _, route = arg.partition("/")
        return RuleAgent(seq or "SPT", route or "SQ")
    if head == "static":
        return StaticPlanAgent(arg or "SPT")
    if head == "recompute":
        return RecomputeAgent(arg or "SPT")
    if head == "fixed":
        return FixedRuleSelector(int(arg))
    raise ConfigError(f"unknown agent spec {spec!r}")


@dataclass(frozen=True)
class TrainableSpec:
    """A learner trained inside the bench before evaluation."""

    algo: str  # ql | sarsa
    episodes: int = 500
    hp: Hyperparams = field(default_factory=Hyperparams)
    name: str = ""
    key: str = "default"  # default | raw

    def state_key(self):
        return raw_state_key if self.key == "raw" else default_state_key

    def train(self, envs, seed: int) -> TabularPolicyAgent:
        trainer = q_learning_train if self.algo == "ql" else sarsa_train
        table = trainer(envs, self.episodes, self.hp, self.state_key(), seed)
        return TabularPolicyAgent(table, self.state_key(), epsilon=0.0,
                                  seed=seed, name=self.name or self.algo)


def parse_trainable(spec: str) -> TrainableSpec | None:
    """ql | sarsa, optionally :default/:raw for the state key and a
    trailing :<episodes> count, e.g. "ql:raw:800"."""
    parts = spec.split(":")
    if parts[0] not in ("ql", "sarsa"):
        return None
    episodes = 500
    key = "default"
    for part in parts[1:]:
        if part in ("default", "raw"):
            key = part
        elif part.isdigit():
            episodes = int(part)
        elif part:
            raise ConfigError(f"unknown trainable option {part!r} in {spec!r}")
    return TrainableSpec(algo=parts[0], episodes=episodes, name=spec, key=key)
