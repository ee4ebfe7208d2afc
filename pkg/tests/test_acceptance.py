"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with -s to watch them). Tolerances are fixed here and
nowhere else."""

import itertools
import time

import pytest

from shopbench import agents, bench, instance as im, mdp, notation as nt
from shopbench import objectives as ob
from shopbench.agents import Hyperparams
from shopbench.bench import ExperimentConfig, sign_test
from shopbench.rng import RngStream

from util import brute_force_makespan, cross22

PASS = "[PASS]"


def _report(name):
    print(f"{PASS} {name}")


# ---------------------------------------------------------------------------
# 1. determinism / replay


def test_determinism_and_replay_over_fifty_configs():
    started = time.perf_counter()
    alphas = ["Jm", "FJc", "Fm"]
    variants = ["", "r_j^s", "brkdwn^s", "p_ji^s"]
    rules = ["SPT", "FIFO", "LPT", "EDD", "LIFO"]
    checked = 0
    for idx in range(50):
        alpha = alphas[idx % 3]
        variant = variants[idx % 4]
        rule = rules[idx % 5]
        beta = variant
        text = f"{alpha}|{beta}|C_max" if beta else f"{alpha}||C_max"
        t = nt.parse_triplet(text)
        mpw = 2 if alpha == "FJc" else 1
        inst = im.generate_instance(
            t, im.GenShape(3, 2, mpw, (1, 9), 1.5), seed=1000 + idx)
        horizon = 150.0 if variant in ("brkdwn^s",) else None
        seed = 77 + idx

        env_a = mdp.make_env(inst, mdp.OPERATION_SEQUENCING, seed=seed,
                             horizon=horizon)
        res_a = agents.run_episode(env_a, agents.RuleAgent(rule))
        env_b = mdp.make_env(inst, mdp.OPERATION_SEQUENCING, seed=seed,
                             horizon=horizon)
        res_b = agents.run_episode(env_b, agents.RuleAgent(rule))
        assert res_a.trace_digest == res_b.trace_digest, f"config {idx} not deterministic"

        replayed = env_a.replay_actions(res_a.actions)
        assert replayed.trace_digest() == res_a.trace_digest, f"config {idx} replay differs"
        checked += 1
    elapsed = time.perf_counter() - started
    assert checked == 50
    assert elapsed < 120.0, f"determinism suite took {elapsed:.1f}s (budget 120s)"
    _report(f"determinism/replay: 50 configs bit-identical and replayable "
            f"({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 2. exogenous policy-independence


def test_exogenous_events_identical_across_policies():
    alphas = ["Jm", "FJc", "Fm"]
    variants = ["r_j^s", "brkdwn^s", "p_ji^s,brkdwn^s", "r_j^s,brkdwn^s"]
    for idx in range(20):
        alpha = alphas[idx % 3]
        beta = variants[idx % 4]
        t = nt.parse_triplet(f"{alpha}|{beta}|C_max")
        mpw = 2 if alpha == "FJc" else 1
        inst = im.generate_instance(
            t, im.GenShape(3, 2, mpw, (1, 9), 1.5), seed=500 + idx)
        horizon = 150.0
        seed = 11 + idx
        multisets = []
        for make_agent in (lambda: agents.RuleAgent("FIFO"),
                           lambda: agents.RuleAgent("SPT"),
                           lambda: agents.RandomAgent(999 + idx)):
            env = mdp.make_env(inst, mdp.OPERATION_SEQUENCING, seed=seed,
                               horizon=horizon)
            agents.run_episode(env, make_agent())
            multisets.append(sorted(env.sim.exogenous_events))
        assert multisets[0] == multisets[1] == multisets[2], \
            f"config {idx}: exogenous events depend on the policy"
    _report("exogenous policy-independence: 20 stochastic configs, zero deviations")


# ---------------------------------------------------------------------------
# 3. oracle equivalence on all tiny instances


def test_oracle_equals_brute_force_on_all_81_instances():
    started = time.perf_counter()
    rules = ["SPT", "LPT", "FIFO", "LIFO"]
    count = 0
    for durs in itertools.product((1, 2, 3), repeat=4):
        inst = cross22(*durs)
        oracle = agents.exhaustive_oracle(inst)["value"]
        brute = brute_force_makespan(inst)
        assert oracle == brute, f"{durs}: oracle {oracle} != brute force {brute}"
        for rule in rules:
            env = mdp.make_env(inst, mdp.OPERATION_SEQUENCING, seed=0)
            res = agents.run_episode(env, agents.RuleAgent(rule))
            assert res.objective >= oracle - 1e-9, \
                f"{durs}: rule {rule} beat the oracle"
        count += 1
    elapsed = time.perf_counter() - started
    assert count == 81
    assert elapsed < 60.0, f"oracle suite took {elapsed:.1f}s (budget 60s)"
    _report(f"oracle equivalence: 81 instances match brute force, "
            f"rules never beat it ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 4. metric identities


def test_metric_identities_on_ten_thousand_records():
    rng = RngStream(314159, "acceptance-metrics")
    violations = 0
    for _ in range(10000):
        n_jobs = rng.randint(1, 3)
        jobs = []
        ops = []
        busy = []
        clock = 0.0
        for j in range(n_jobs):
            release = rng.uniform(0.0, 20.0)
            total = rng.uniform(0.5, 30.0)
            start = max(release, clock) + rng.uniform(0.0, 5.0)
            completion = start + total
            clock = completion
            due = None if rng.random() < 0.2 else rng.uniform(0.0, 80.0)
            jobs.append(ob.JobRecord(j, release, due, total, completion))
            ops.append(ob.OpRecord(j, 0, 0, start, total))
            busy.append((start, completion))
        horizon = clock + rng.uniform(0.0, 10.0)
        rec = ob.ScheduleRecord(
            jobs=jobs, ops=ops,
            machines=[ob.MachineRecord(0, busy=busy, buffer_series=[(0.0, 0)])],
            horizon=horizon)
        table = ob.job_metrics(rec)
        per, _ = ob.resource_metrics(rec, horizon)
        for jm in table.values():
            if jm.idle < -1e-12:
                violations += 1
            if jm.lateness is None:
                continue
            if abs((jm.tardiness - jm.earliness) - jm.lateness) > 1e-12:
                violations += 1
            if jm.tardiness * jm.earliness != 0.0:
                violations += 1
            if (jm.unit_cost == 1.0) != (jm.tardiness > 0):
                violations += 1
        for mm in per.values():
            if not 0.0 <= mm.utilization <= 1.0:
                violations += 1
    assert violations == 0
    _report("metric identities: 10000 records, zero violations")


# ---------------------------------------------------------------------------
# 5. reward telescoping


def test_dense_reward_telescopes_on_hundred_episodes():
    rng = RngStream(2718, "acceptance-telescope")
    spec = mdp.RewardSpec("dense_delta",
                          nt.parse_triplet("Jm||sum_T_j").gamma)
    for episode in range(100):
        alpha = ["Jm", "Fm", "FJc"][episode % 3]
        t = nt.parse_triplet(f"{alpha}||sum_T_j")
        mpw = 2 if alpha == "FJc" else 1
        inst = im.generate_instance(
            t, im.GenShape(3, 2, mpw, (1, 9), 1.2), seed=rng.randint(0, 100000))
        env = mdp.make_env(inst, mdp.OPERATION_SEQUENCING, seed=episode, rew=spec)
        agent = agents.RandomAgent(episode)
        obs, info = env.reset()
        total = 0.0
        while "terminal" not in info:
            obs, reward, done, info = env.step(agent.act(obs, info))
            total += reward
        assert info["terminal"] == "success"
        assert abs(total - (-info["objective"])) <= 1e-9, \
            f"episode {episode}: sum {total} vs objective {info['objective']}"
    _report("reward telescoping: 100 episodes, dense sums equal the terminal objective")


# ---------------------------------------------------------------------------
# 6. tabular learning sanity


class _Chain:
    REWARDS = {0: 0.0, 1: 1.0}

    def reset(self):
        self.state = 0
        return {"state": 0}, {"legal": [0, 1]}

    def step(self, action):
        reward = self.REWARDS[action]
        self.state += 1
        done = self.state == 2
        info = {"legal": [0, 1]}
        if done:
            info["terminal"] = "success"
        return {"state": self.state}, reward, done, info


def _chain_key(obs, info):
    return (obs["state"],)


def test_tabular_learning_sanity():
    started = time.perf_counter()
    # backward induction on the chain: V(1) = 1, V(0) = 1 + 0.9
    hp = Hyperparams(learning_rate=0.2, discount=0.9,
                     epsilon_start=1.0, epsilon_end=0.0,
                     epsilon_decay_fraction=0.8)
    expected = {(0,): {0: 0.9, 1: 1.9}, (1,): {0: 0.0, 1: 1.0}}
    for trainer in (agents.q_learning_train, agents.sarsa_train):
        table = trainer(_Chain(), 5000, hp, _chain_key, seed=3)
        for key, row in expected.items():
            v_star = max(row.values())
            best = max(row, key=row.get)
            assert max(table.q(key, a) for a in (0, 1)) == pytest.approx(v_star, abs=1e-6)
            assert table.q(key, best) == pytest.approx(row[best], abs=1e-6)
    # every pair for the off-policy learner
    table = agents.q_learning_train(_Chain(), 5000, hp, _chain_key, seed=3)
    for key, row in expected.items():
        for action, value in row.items():
            assert table.q(key, action) == pytest.approx(value, abs=1e-6)

    # the fixed seeded 3x3 job shop
    t = nt.parse_triplet("Jm||C_max")
    inst = im.generate_instance(t, im.GenShape(3, 3, 1, (1, 19), 1.5), seed=26)

    def env_for():
        return mdp.make_env(inst, mdp.OPERATION_SEQUENCING,
                            obs=mdp.ObsSpec(raw=True),
                            act=mdp.ActionSpec(mode="direct", allow_defer=False),
                            seed=0, record_trace=False)

    q_vals, r_vals = [], []
    for seed in range(20):
        table = agents.q_learning_train(env_for(), episodes=600,
                                        state_key=agents.raw_state_key, seed=seed)
        policy = agents.TabularPolicyAgent(table, state_key=agents.raw_state_key)
        q_vals.append(agents.run_episode(env_for(), policy).objective)
        r_vals.append(agents.run_episode(env_for(), agents.RandomAgent(seed)).objective)
    mean_q = sum(q_vals) / len(q_vals)
    mean_r = sum(r_vals) / len(r_vals)
    stats = sign_test(q_vals, r_vals)
    elapsed = time.perf_counter() - started
    assert mean_q <= mean_r, f"mean QL {mean_q} above mean random {mean_r}"
    assert stats["p"] < 0.05, f"sign test p {stats['p']} not significant"
    assert elapsed < 300.0, f"learning suite took {elapsed:.1f}s (budget 300s)"
    _report(f"tabular learning: toy MDP fixed point reached; "
            f"QL {mean_q:.2f} vs random {mean_r:.2f}, p={stats['p']:.4g} "
            f"({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 7. benchmark-file ingestion


FT06_PINNED = {"SPT": 88.0, "FIFO": 65.0, "LPT": 77.0}


def test_benchmark_file_ingestion_and_pinned_rule_values(ft06):
    from util import check_conservation

    assert ft06.n_jobs == 6 and ft06.n_machines == 6
    assert all(len(j.operations) == 6 for j in ft06.jobs)
    values = {}
    for rule in ("SPT", "FIFO", "LPT", "EDD", "LIFO"):
        env = mdp.make_env(ft06, mdp.OPERATION_SEQUENCING, seed=0)
        res = agents.run_episode(env, agents.RuleAgent(rule))
        assert res.terminal == "success"
        assert check_conservation(env.sim) == [], f"{rule} schedule infeasible"
        values[rule] = res.objective
    assert values["SPT"] == FT06_PINNED["SPT"]
    assert values["FIFO"] == FT06_PINNED["FIFO"]
    assert values["LPT"] == FT06_PINNED["LPT"]
    assert len({values["SPT"], values["FIFO"], values["LPT"]}) == 3
    _report(f"benchmark ingestion: 6x6 parsed, all rules feasible, "
            f"SPT/FIFO/LPT = {values['SPT']}/{values['FIFO']}/{values['LPT']}")


# ---------------------------------------------------------------------------
# 8. bench no-omission


def test_bench_no_omission_with_crashing_agent():
    class Crasher(agents.Agent):
        name = "crash"

        def act(self, obs, info):
            raise RuntimeError("deliberate acceptance crash")

    cfg = ExperimentConfig.from_dict(dict(
        name="acceptance-crash",
        agents=["rule:SPT", "random", "crash"],
        seeds=list(range(10)),
        generator={"triplet": "Jm||C_max", "n_jobs": 3, "work_centers": 2,
                   "machines_per_wc": 1, "duration_range": [1, 6], "seed": 8},
        action={"mode": "rules"},
    ))
    report = bench.run_experiment(
        cfg, agent_factories={"crash": lambda seed: Crasher()})
    assert len(report.rows) == len(cfg.agents) * len(cfg.seeds)
    crash_rows = [r for r in report.rows if r["agent"] == "crash"]
    assert len(crash_rows) == len(cfg.seeds)
    assert all(r["status"] == "failed" for r in crash_rows)
    assert all("deliberate acceptance crash" in r["error"] for r in crash_rows)
    ok_rows = [r for r in report.rows if r["agent"] != "crash"]
    assert all(r["status"] == "ok" for r in ok_rows)
    _report("bench no-omission: 30 rows present, 10 recorded failures")
