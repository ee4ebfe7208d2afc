"""Command-line entry point.

Thin adapters only: each subcommand maps arguments onto one module
operation and renders the result. Stochastic subcommands require an
explicit --seed; nothing ever draws entropy implicitly. Usage errors exit
with status 2, validation failures with status 1.
"""

from __future__ import annotations

import json
import sys

import click

from . import __version__, agents, bench, instance, mdp, notation, serve, simcore
from .errors import ReplayDivergence, ShopbenchError

TRACE_HEADER_KEY = "env_config"


@click.group()
@click.version_option(__version__, prog_name="shopbench")
def main() -> None:
    """Production-scheduling simulation and benchmarking toolkit."""


# ---------------------------------------------------------------------------
# notation


@main.group("notation")
def notation_group() -> None:
    """Parse and check problem classifications."""


@notation_group.command("parse")
@click.argument("text")
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def notation_parse(text: str, as_json: bool) -> None:
    try:
        triplet = notation.parse_triplet(text)
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    if as_json:
        click.echo(json.dumps({"canonical": notation.render_triplet(triplet)}))
    else:
        click.echo(notation.render_triplet(triplet))


@notation_group.command("validate")
@click.argument("text")
@click.option("--json", "as_json", is_flag=True)
def notation_validate(text: str, as_json: bool) -> None:
    try:
        triplet = notation.parse_triplet(text)
        violations = notation.validate(triplet)
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    if as_json:
        click.echo(json.dumps([v.to_dict() for v in violations]))
    else:
        for v in violations:
            click.echo(f"{v.code}: {v.message}")
        if not violations:
            click.echo("ok")
    if violations:
        sys.exit(1)


# ---------------------------------------------------------------------------
# instance


@main.group("instance")
def instance_group() -> None:
    """Generate, validate and convert problem instances."""


@instance_group.command("gen")
@click.option("--triplet", required=True, help="problem classification text")
@click.option("--jobs", type=int, required=True)
@click.option("--work-centers", type=int, required=True)
@click.option("--machines-per-wc", type=int, default=1, show_default=True)
@click.option("--dur-lo", type=int, default=1, show_default=True)
@click.option("--dur-hi", type=int, default=9, show_default=True)
@click.option("--tightness", type=float, default=1.5, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def instance_gen(triplet, jobs, work_centers, machines_per_wc, dur_lo, dur_hi,
                 tightness, seed, out) -> None:
    try:
        t = notation.parse_triplet(triplet)
        shape = instance.GenShape(jobs, work_centers, machines_per_wc,
                                  (dur_lo, dur_hi), tightness)
        inst = instance.generate_instance(t, shape, seed)
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    text = instance.serialize_instance(inst)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


@instance_group.command("validate")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def instance_validate(path: str, as_json: bool) -> None:
    try:
        inst = _load_instance(path)
        violations = instance.validate_instance(inst)
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    if as_json:
        click.echo(json.dumps([v.to_dict() for v in violations]))
    else:
        for v in violations:
            click.echo(f"{v.code}: {v.message}")
        if not violations:
            click.echo("ok")
    if violations:
        sys.exit(1)


@instance_group.command("convert")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def instance_convert(path: str, out) -> None:
    """Classic benchmark text to the native JSON schema."""
    try:
        with open(path, encoding="utf-8") as fh:
            inst = instance.load_orlib(fh.read())
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    text = instance.serialize_instance(inst)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


def _load_instance(path: str):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        return instance.deserialize_instance(text)
    return instance.load_orlib(text)


# ---------------------------------------------------------------------------
# run / serve / replay


def _env_from_options(instance_path, breakdown, seed, horizon, action_mode,
                      features, raw):
    # inline the instance so the config echo (and any trace) is self-contained
    inst = _load_instance(instance_path)
    cfg = {
        "instance": instance.instance_to_dict(inst),
        "breakdown": breakdown,
        "seed": seed,
        "horizon": horizon,
        "action": {"mode": action_mode},
        "obs": {"raw": raw, "features": list(features)},
    }
    return mdp.env_from_config(cfg), cfg


@main.command("run")
@click.option("--instance", "instance_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--agent", "agent_spec", default="rule:SPT", show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--horizon", type=float, default=None)
@click.option("--breakdown", default="operation_sequencing", show_default=True)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None,
              help="write the run trace (line-delimited JSON)")
@click.option("--json", "as_json", is_flag=True)
def run_cmd(instance_path, agent_spec, seed, horizon, breakdown, trace_path,
            as_json) -> None:
    """One episode with one agent; prints the objective and trace digest."""
    try:
        env, env_cfg = _env_from_options(instance_path, breakdown, seed, horizon,
                                         "direct", (), False)
        agent = agents.make_agent(agent_spec, seed)
        result = agents.run_episode(env, agent)
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    if trace_path:
        with open(trace_path, "w", encoding="utf-8") as fh:
            header = {TRACE_HEADER_KEY: env_cfg, "v": mdp.PROTOCOL_VERSION}
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for line in env.sim.trace_lines():
                fh.write(line + "\n")
            footer = {"actions": [list(a) for a in result.actions],
                      "digest": result.trace_digest}
            fh.write(json.dumps(footer, sort_keys=True) + "\n")
    payload = {
        "agent": agent.name,
        "terminal": result.terminal,
        "objective": result.objective,
        "steps": result.steps,
        "clock": result.clock,
        "trace_digest": result.trace_digest,
    }
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        for k, v in payload.items():
            click.echo(f"{k}: {v}")


@main.command("replay")
@click.option("--trace", "trace_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def replay_cmd(trace_path, as_json) -> None:
    """Re-run a recorded trace and verify the digest matches."""
    with open(trace_path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise click.ClickException("trace file is too short")
    header = json.loads(lines[0])
    footer = json.loads(lines[-1])
    if TRACE_HEADER_KEY not in header or "actions" not in footer:
        raise click.ClickException("not a run trace file")
    try:
        env = mdp.env_from_config(header[TRACE_HEADER_KEY])
        state = env.replay_actions(footer["actions"])
    except ReplayDivergence as exc:
        click.echo(f"divergence: {exc}")
        sys.exit(1)
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    digest = state.trace_digest()
    ok = digest == footer.get("digest")
    if as_json:
        click.echo(json.dumps({"match": ok, "digest": digest,
                               "expected": footer.get("digest")}))
    else:
        click.echo("match" if ok else
                   f"mismatch: got {digest}, expected {footer.get('digest')}")
    if not ok:
        sys.exit(1)


@main.command("serve")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="environment config JSON")
@click.option("--stdio", "use_stdio", is_flag=True, default=False)
@click.option("--port", type=int, default=None, help="serve one TCP client")
def serve_cmd(config_path, use_stdio, port) -> None:
    """Expose one environment over the wire protocol."""
    import os
    with open(config_path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    try:
        env = mdp.env_from_config(cfg, base_dir=os.path.dirname(config_path) or ".")
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    if use_stdio == (port is not None):
        raise click.UsageError("choose exactly one of --stdio / --port")
    if use_stdio:
        serve.serve_stdio(env)
    else:
        def announce(p):
            click.echo(f"listening on {p}", err=True)
            sys.stderr.flush()
        serve.serve_tcp(env, port=port, announce=announce)


# ---------------------------------------------------------------------------
# bench / report


@main.command("bench")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="experiment config (JSON or TOML)")
@click.option("--out", "outdir", required=True, type=click.Path(file_okay=False))
def bench_cmd(config_path, outdir) -> None:
    """Run a full multi-seed experiment and write report files."""
    import os
    try:
        cfg = bench.load_config(config_path)
        report = bench.run_experiment(cfg, base_dir=os.path.dirname(config_path) or ".")
    except ShopbenchError as exc:
        raise click.ClickException(str(exc))
    paths = bench.write_report(report, outdir)
    for fmt, path in paths.items():
        click.echo(f"{fmt}: {path}")
    if report.any_failed:
        click.echo("some cells failed; see the report", err=True)
        sys.exit(1)


@main.command("report")
@click.option("--in", "report_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "md"]),
              default="md", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def report_cmd(report_path, fmt, out_path) -> None:
    """Re-render a stored report."""
    with open(report_path, encoding="utf-8") as fh:
        rep = bench.RunReport.from_json(fh.read())
    text = bench.render_report(rep, fmt)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


if __name__ == "__main__":
    main()
