"""Multi-seed experiment orchestration with full-disclosure reporting.

A config names an instance source, an environment setup, a list of agents
(at least one dispatching-rule baseline plus the random baseline) and at
least ten distinct seeds. Every (agent, seed) cell is executed and lands
in the report, crashes included, so the row count is always
|agents| x |seeds| and nothing can be quietly dropped. Learners are
trained on the train split only and evaluated greedily everywhere, with
their test rows marked. Aggregation is mean/std/min/max, a seeded
percentile-bootstrap confidence interval, and an exact paired two-sided
sign test against every baseline.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

from . import agents as agents_mod
from . import instance as instance_mod
from . import mdp, notation
from .errors import ConfigError
from .instance import GenShape, Instance
from .rng import RngStream

SCHEMA_VERSION = 1
BOOTSTRAP_RESAMPLES = 10000


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    name: str
    agents: list[str]
    seeds: list[int]
    instance_file: str | None = None
    instance_inline: dict | None = None
    generator: dict | None = None  # {"triplet", "n_jobs", "work_centers", ...}
    breakdown: str = "operation_sequencing"
    triggers: list[str] = field(default_factory=list)
    obs: dict = field(default_factory=dict)
    action: dict = field(default_factory=lambda: {"mode": "rules"})
    reward: dict = field(default_factory=dict)
    objective: str | None = None  # defaults to the instance objective
    horizon: float | None = None
    train_fraction: float = 0.5
    train_seeds: list[int] | None = None
    test_seeds: list[int] | None = None
    episodes: int = 500
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> list[str]:
        problems = []
        if len(self.seeds) < 10:
            problems.append(f"need at least 10 seeds, got {len(self.seeds)}")
        if len(set(self.seeds)) != len(self.seeds):
            problems.append("seeds must be distinct")
        if not any(a.startswith("rule:") for a in self.agents):
            problems.append("at least one dispatching-rule baseline is required")
        if "random" not in self.agents:
            problems.append("the random baseline is required")
        sources = [s is not None for s in
                   (self.instance_file, self.instance_inline, self.generator)]
        if sum(sources) != 1:
            problems.append("exactly one instance source must be given")
        if self.train_seeds is not None or self.test_seeds is not None:
            train = set(self.train_seeds or [])
            test = set(self.test_seeds or [])
            if train & test:
                problems.append("train and test seeds overlap")
            if not (train | test) <= set(self.seeds):
                problems.append("split seeds must come from the seed list")
        elif not 0.0 < self.train_fraction < 1.0:
            problems.append("train_fraction must lie strictly between 0 and 1")
        return problems

    def split(self) -> tuple[list[int], list[int]]:
        if self.train_seeds is not None or self.test_seeds is not None:
            train = list(self.train_seeds or [])
            test = list(self.test_seeds or [s for s in self.seeds if s not in train])
            return train, test
        k = int(round(self.train_fraction * len(self.seeds)))
        k = min(max(k, 1), len(self.seeds) - 1)
        return list(self.seeds[:k]), list(self.seeds[k:])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {d.get('schema_version')!r}")
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(raw.decode("utf-8"))
    else:
        data = json.loads(raw.decode("utf-8"))
    return ExperimentConfig.from_dict(data)


def resolve_instance(cfg: ExperimentConfig, base_dir: str = ".") -> Instance:
    if cfg.instance_file is not None:
        path = cfg.instance_file
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if path.endswith(".json"):
            return instance_mod.deserialize_instance(text)
        return instance_mod.load_orlib(text)
    if cfg.instance_inline is not None:
        return instance_mod.instance_from_dict(cfg.instance_inline)
    g = dict(cfg.generator)
    triplet = notation.parse_triplet(g.pop("triplet"))
    seed = g.pop("seed", 0)
    shape = GenShape(
        n_jobs=g.pop("n_jobs"),
        work_centers=g.pop("work_centers"),
        machines_per_wc=g.pop("machines_per_wc", 1),
        duration_range=tuple(g.pop("duration_range", (1, 9))),
        due_tightness=g.pop("due_tightness", 1.5),
    )
    if g:
        raise ConfigError(f"unknown generator fields: {sorted(g)}")
    return instance_mod.generate_instance(triplet, shape, seed)


# ---------------------------------------------------------------------------
# statistics


def sign_test(xs: list[float], ys: list[float]) -> dict:
    """Exact paired two-sided sign test; ties drop out."""
    if len(xs) != len(ys):
        raise ConfigError("sign test needs paired samples")
    wins = sum(1 for x, y in zip(xs, ys) if x < y)
    losses = sum(1 for x, y in zip(xs, ys) if x > y)
    ties = len(xs) - wins - losses
    n = wins + losses
    if n == 0:
        p = 1.0
    else:
        k = min(wins, losses)
        tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0 ** n
        p = min(1.0, 2.0 * tail)
    return {"wins": wins, "losses": losses, "ties": ties, "n": n, "p": p}


def bootstrap_ci(values: list[float], stream: RngStream,
                 resamples: int = BOOTSTRAP_RESAMPLES,
                 level: float = 0.95) -> tuple[float, float]:
    """Seeded percentile bootstrap of the mean."""
    n = len(values)
    means = []
    for _ in range(resamples):
        total = 0.0
        for _ in range(n):
            total += values[stream.randrange(n)]
        means.append(total / n)
    means.sort()
    lo_idx = int((1.0 - level) / 2.0 * (resamples - 1))
    hi_idx = int((1.0 + level) / 2.0 * (resamples - 1))
    return means[lo_idx], means[hi_idx]


def aggregate(values: list[float], stream: RngStream | None = None) -> dict:
    """mean/std/min/max and a bootstrap CI; parts without enough data are
    marked unavailable (None)."""
    out: dict = {"n": len(values)}
    if not values:
        out.update({"mean": None, "std": None, "min": None, "max": None,
                    "ci95": None})
        return out
    mean = sum(values) / len(values)
    out["mean"] = mean
    out["min"] = min(values)
    out["max"] = max(values)
    if len(values) >= 2:
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        out["std"] = math.sqrt(var)
        stream = stream or RngStream(0, "bench-bootstrap")
        lo, hi = bootstrap_ci(values, stream)
        out["ci95"] = [lo, hi]
    else:
        out["std"] = None
        out["ci95"] = None
    return out


# ---------------------------------------------------------------------------
# execution


@dataclass
class RunReport:
    config: dict
    rows: list[dict]
    aggregates: dict
    comparisons: dict
    versions: dict

    @property
    def any_failed(self) -> bool:
        return any(r["status"] != "ok" for r in self.rows)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        return cls(config=d["config"], rows=d["rows"], aggregates=d["aggregates"],
                   comparisons=d["comparisons"], versions=d["versions"])


def _env_config(cfg: ExperimentConfig, inst: Instance, seed: int) -> mdp.Env:
    reward = dict(cfg.reward)
    if cfg.objective and "objective" not in reward:
        reward["objective"] = cfg.objective
    env_cfg = {
        "instance": instance_mod.instance_to_dict(inst),
        "breakdown": cfg.breakdown,
        "triggers": cfg.triggers,
        "obs": cfg.obs,
        "action": cfg.action,
        "reward": reward,
        "seed": seed,
        "horizon": cfg.horizon,
    }
    return mdp.env_from_config(env_cfg)


def _objective_spec(cfg: ExperimentConfig, inst: Instance):
    if cfg.objective:
        return notation.parse_triplet(f"Jm||{cfg.objective}").gamma
    return inst.triplet.gamma


def run_experiment(cfg: ExperimentConfig, agent_factories: dict | None = None,
                   base_dir: str = ".") -> RunReport:
    """Execute every (agent, seed) cell and assemble the full report."""
    problems = cfg.validate()
    if problems:
        raise ConfigError("invalid experiment config: " + "; ".join(problems))
    inst = resolve_instance(cfg, base_dir)
    train_seeds, test_seeds = cfg.split()
    factories = dict(agent_factories or {})

    # train learners once on the training split only
    trained: dict[str, agents_mod.Agent] = {}
    for spec in cfg.agents:
        trainable = agents_mod.parse_trainable(spec)
        if trainable is None:
            continue
        if not any(p.isdigit() for p in spec.split(":")):
            import dataclasses
            trainable = dataclasses.replace(trainable, episodes=cfg.episodes)
        train_envs = [_env_config(cfg, inst, s) for s in train_seeds]
        for env in train_envs:
            env.record_trace = False
        trained[spec] = trainable.train(train_envs, seed=train_seeds[0])

    def build_agent(spec: str, seed: int) -> agents_mod.Agent:
        if spec in factories:
            return factories[spec](seed)
        if spec in trained:
            return trained[spec]
        return agents_mod.make_agent(spec, seed)

    cells = [(spec, seed) for spec in cfg.agents for seed in cfg.seeds]

    def run_cell(spec: str, seed: int) -> dict:
        started = time.perf_counter()
        row = {
            "agent": spec,
            "seed": seed,
            "split": "train" if seed in train_seeds else "test",
            "status": "ok",
            "value": None,
            "terminal": None,
            "trace_digest": None,
            "error": None,
        }
        try:
            env = _env_config(cfg, inst, seed)
            agent = build_agent(spec, seed)
            result = agents_mod.run_episode(env, agent)
            value = result.objective
            row["value"] = list(value) if isinstance(value, tuple) else value
            row["terminal"] = result.terminal
            row["trace_digest"] = result.trace_digest
        except Exception as exc:  # a crash is a result, never an omission
            row["status"] = "failed"
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["runtime"] = time.perf_counter() - started
        return row

    threads = int(os.environ.get("SHOPBENCH_THREADS", "1") or "1")
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda c: run_cell(*c), cells))
    else:
        rows = [run_cell(*c) for c in cells]

    aggregates = {}
    comparisons = {}
    baselines = [a for a in cfg.agents
                 if a.startswith("rule:") or a == "random"]

    def test_values(spec: str) -> dict[int, float]:
        return {r["seed"]: r["value"] for r in rows
                if r["agent"] == spec and r["split"] == "test"
                and r["status"] == "ok" and isinstance(r["value"], (int, float))}

    for spec in cfg.agents:
        vals = test_values(spec)
        stream = RngStream(cfg.seeds[0], f"bench-bootstrap:{spec}")
        aggregates[spec] = aggregate([vals[s] for s in sorted(vals)], stream)
        comp = {}
        for base in baselines:
            if base == spec:
                continue
            base_vals = test_values(base)
            shared = sorted(set(vals) & set(base_vals))
            if len(shared) < 6:
                comp[base] = {"p": None, "n": len(shared),
                              "note": "fewer than 6 comparable pairs"}
            else:
                comp[base] = sign_test([vals[s] for s in shared],
                                       [base_vals[s] for s in shared])
        comparisons[spec] = comp

    from . import __version__
    report = RunReport(
        config=cfg.to_dict(),
        rows=rows,
        aggregates=aggregates,
        comparisons=comparisons,
        versions={"artifact": __version__, "report_schema": SCHEMA_VERSION},
    )
    assert len(report.rows) == len(cfg.agents) * len(cfg.seeds)
    return report


# ---------------------------------------------------------------------------
# rendering


def render_csv(rep: RunReport) -> str:
    cols = ["agent", "seed", "split", "status", "value", "terminal",
            "trace_digest", "runtime", "error"]
    lines = [",".join(cols)]
    for r in rep.rows:
        cells = []
        for c in cols:
            v = r.get(c)
            if v is None:
                cells.append("")
            else:
                text = str(v)
                if "," in text or '"' in text:
                    text = '"' + text.replace('"', '""') + '"'
                cells.append(text)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def render_markdown(rep: RunReport) -> str:
    cfg = rep.config
    out = [f"# Experiment report: {cfg['name']}", ""]
    out.append(f"- artifact version: {rep.versions.get('artifact')}")
    out.append(f"- breakdown: {cfg['breakdown']}")
    out.append(f"- objective: {cfg.get('objective') or 'instance default'}")
    out.append(f"- seeds ({len(cfg['seeds'])}): "
               + ", ".join(str(s) for s in cfg["seeds"]))
    train, test = ExperimentConfig.from_dict(cfg).split()
    out.append(f"- train seeds: {', '.join(str(s) for s in train)}")
    out.append(f"- test seeds: {', '.join(str(s) for s in test)}")
    out.append(f"- rows: {len(rep.rows)} = "
               f"{len(cfg['agents'])} agents x {len(cfg['seeds'])} seeds")
    failed = [r for r in rep.rows if r["status"] != "ok"]
    out.append(f"- failed cells: {len(failed)}")
    out.append("")
    out.append("## Aggregates (test split)")
    out.append("")
    out.append("| agent | n | mean | std | min | max | 95% CI |")
    out.append("|---|---|---|---|---|---|---|")
    for spec, agg in rep.aggregates.items():
        ci = agg.get("ci95")
        ci_text = f"[{ci[0]:.4g}, {ci[1]:.4g}]" if ci else "n/a"
        fmt = lambda v: f"{v:.6g}" if isinstance(v, (int, float)) else "n/a"
        out.append(f"| {spec} | {agg['n']} | {fmt(agg['mean'])} | {fmt(agg['std'])} "
                   f"| {fmt(agg['min'])} | {fmt(agg['max'])} | {ci_text} |")
    out.append("")
    out.append("## Paired sign tests vs baselines (test split)")
    out.append("")
    out.append("| agent | baseline | wins | losses | ties | p |")
    out.append("|---|---|---|---|---|---|")
    for spec, comp in rep.comparisons.items():
        for base, st in comp.items():
            if st.get("p") is None:
                out.append(f"| {spec} | {base} | - | - | - | n/a ({st.get('note')}) |")
            else:
                out.append(f"| {spec} | {base} | {st['wins']} | {st['losses']} "
                           f"| {st['ties']} | {st['p']:.5g} |")
    out.append("")
    out.append("## Reporting criteria self-assessment")
    out.append("")
    out.append("| criterion | status |")
    out.append("|---|---|")
    out.append("| setup disclosed | yes: full config echoed in this report |")
    out.append("| input availability | yes: instance source embedded in config |")
    out.append("| reproducible stochasticity | yes: seeded streams, events pre-sampled |")
    out.append("| train-test split | yes: seeds listed above |")
    out.append("| sufficient baselines | "
               + ("yes: rule + random baselines present |" if any(
                   a.startswith("rule:") for a in cfg["agents"]) else "NO |"))
    out.append(f"| cherry-picking guard | yes: {len(rep.rows)} rows, none omitted |")
    out.append("")
    return "\n".join(out)


def render_report(rep: RunReport, fmt: str) -> str:
    if fmt == "json":
        return rep.to_json()
    if fmt == "csv":
        return render_csv(rep)
    if fmt in ("md", "markdown"):
        return render_markdown(rep)
    raise ConfigError(f"unknown report format {fmt!r}")


def write_report(rep: RunReport, outdir: str) -> dict[str, str]:
    os.makedirs(outdir, exist_ok=True)
    paths = {}
    for fmt, name in (("json", "report.json"), ("csv", "report.csv"),
                      ("md", "report.md")):
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(render_report(rep, fmt))
        paths[fmt] = path
    return paths
