import json
import os
import subprocess
import sys
import threading

import pytest

from gymshim import ProtocolMismatch, RemoteEnv, RemoteEnvError, ServerDied

HERE = os.path.dirname(__file__)
CORE = os.path.abspath(os.path.join(HERE, "..", ".."))

FT06 = """6 6
2 1 0 3 1 6 3 7 5 3 4 6
1 8 2 5 4 10 5 10 0 10 3 4
2 5 3 4 5 8 0 9 1 1 4 7
1 5 0 5 2 5 3 3 4 8 5 9
2 9 1 3 4 5 5 4 0 3 3 1
1 3 3 3 5 9 0 10 4 4 2 1
"""


@pytest.fixture
def env_config(tmp_path):
    inst = tmp_path / "ft06.txt"
    inst.write_text(FT06)
    cfg = {"instance": str(inst), "breakdown": "operation_sequencing", "seed": 5}
    path = tmp_path / "env.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def server_cmd(env_config):
    return [sys.executable, "-m", "shopbench.cli", "serve",
            "--config", env_config, "--stdio"]


def spt_action(info):
    starts = [c for c in info["candidates"] if "job" in c]
    best = min(starts, key=lambda c: (c["duration"], c["job"], c["op"]))
    return best["code"]


def drive_episode(env):
    obs, info = env.reset()
    steps = 0
    while True:
        obs, reward, done, info = env.step(spt_action(info))
        steps += 1
        if done:
            return info["trace_digest"], steps


def test_spec_is_cached_and_versioned(env_config):
    with RemoteEnv(cmd=server_cmd(env_config)) as env:
        assert env.spec["protocol"] == 1
        assert env.spec["observation"]["n_jobs"] == 6
        assert env.spec["triplet"] == "Jm||C_max"


def test_reset_deterministic_across_fresh_servers(env_config):
    with RemoteEnv(cmd=server_cmd(env_config)) as a:
        obs_a, info_a = a.reset()
    with RemoteEnv(cmd=server_cmd(env_config)) as b:
        obs_b, info_b = b.reset()
    assert obs_a == obs_b
    assert info_a["legal"] == info_b["legal"]


def test_full_episode_matches_native_trace(env_config):
    with RemoteEnv(cmd=server_cmd(env_config)) as env:
        shim_digest, steps = drive_episode(env)
    assert steps == 36  # one decision per operation on a 6x6 shop

    # natively driven episode with the same construction
    native = subprocess.run(
        [sys.executable, "-m", "shopbench.cli", "run",
         "--instance", json.loads(open(env_config).read())["instance"],
         "--agent", "rule:SPT", "--seed", "5", "--json"],
        capture_output=True, text=True, check=True)
    digest = json.loads(native.stdout)["trace_digest"]
    assert shim_digest == digest


def test_illegal_action_surfaces_and_state_survives(env_config):
    with RemoteEnv(cmd=server_cmd(env_config)) as env:
        obs, info = env.reset()
        with pytest.raises(RemoteEnvError) as err:
            env.step(424242)
        assert err.value.code == "illegal-action"
        # the environment is still usable at the same decision point
        obs, reward, done, info2 = env.step(spt_action(info))
        assert not done


def test_protocol_mismatch_refused(env_config):
    with pytest.raises(ProtocolMismatch):
        RemoteEnv(cmd=server_cmd(env_config), supported_protocol=2)


def test_server_death_reported(env_config):
    env = RemoteEnv(cmd=server_cmd(env_config))
    env.reset()
    env._transport.proc.kill()
    env._transport.proc.wait()
    with pytest.raises(ServerDied):
        env.step(0)
    env.close()


def test_tcp_transport(env_config):
    port_line = {}
    proc = subprocess.Popen(
        [sys.executable, "-m", "shopbench.cli", "serve",
         "--config", env_config, "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)

    def read_port():
        line = proc.stderr.readline()
        port_line["port"] = int(line.strip().split()[-1])

    reader = threading.Thread(target=read_port)
    reader.start()
    reader.join(timeout=10)
    try:
        assert "port" in port_line, "server never announced its port"
        with RemoteEnv(host="127.0.0.1", port=port_line["port"]) as env:
            digest, steps = drive_episode(env)
            assert steps == 36
    finally:
        proc.terminate()
        proc.wait(timeout=5)
