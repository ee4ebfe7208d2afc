"""Newline-delimited JSON environment server (stdio or TCP).

Requests:  {"cmd": "spec" | "reset" | "step" | "close", "action"?, "v"?}
Responses: {"v": 1, ...} — either {"spec": {...}}, an observation bundle
{"obs", "reward", "done", "legal_actions", "info"}, {"closed": true}, or
{"error": {"code", "message"}}. A request carrying a different protocol
version is refused. One server drives exactly one environment; clients
vectorize by running several processes.
"""

from __future__ import annotations

import json
import socket
import sys

from .errors import IllegalActionError, ProtocolError, ShopbenchError
from .mdp import PROTOCOL_VERSION, Env, env_spec_payload


class EnvServer:
    def __init__(self, env: Env):
        self.env = env
        self._started = False

    def handle_line(self, line: str) -> tuple[str, bool]:
        """One request in, one JSON line out; second element signals close."""
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return self._error("bad-json", str(exc)), False
        if not isinstance(req, dict) or "cmd" not in req:
            return self._error("bad-request", "expected an object with a 'cmd' field"), False
        version = req.get("v", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            return self._error(
                "protocol-mismatch",
                f"server speaks protocol {PROTOCOL_VERSION}, request used {version}"), False
        cmd = req["cmd"]
        try:
            if cmd == "spec":
                return self._ok({"spec": env_spec_payload(self.env)}), False
            if cmd == "reset":
                obs, info = self.env.reset()
                self._started = True
                return self._ok({
                    "obs": obs, "reward": 0.0,
                    "done": "terminal" in info,
                    "legal_actions": info.get("legal", []),
                    "info": info,
                }), False
            if cmd == "step":
                if not self._started:
                    return self._error("not-reset", "call reset before step"), False
                if "action" not in req:
                    return self._error("bad-request", "step needs an 'action'"), False
                obs, reward, done, info = self.env.step(req["action"])
                return self._ok({
                    "obs": obs, "reward": reward, "done": done,
                    "legal_actions": info.get("legal", []),
                    "info": info,
                }), False
            if cmd == "close":
                return self._ok({"closed": True}), True
            return self._error("unknown-cmd", f"no such command {cmd!r}"), False
        except IllegalActionError as exc:
            return self._error("illegal-action", str(exc),
                               extra={"legal_actions": self.env.legal_codes(
                                   self.env.current_dp)}), False
        except ShopbenchError as exc:
            return self._error(type(exc).__name__, str(exc)), False

    def _ok(self, payload: dict) -> str:
        doc = {"v": PROTOCOL_VERSION}
        doc.update(payload)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def _error(self, code: str, message: str, extra: dict | None = None) -> str:
        doc = {"v": PROTOCOL_VERSION, "error": {"code": code, "message": message}}
        if extra:
            doc.update(extra)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def serve_stdio(env: Env, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    server = EnvServer(env)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        reply, close = server.handle_line(line)
        stdout.write(reply + "\n")
        stdout.flush()
        if close:
            return


def serve_tcp(env: Env, host: str = "127.0.0.1", port: int = 0,
              announce=None) -> None:
    """Serve one client connection; port 0 picks a free port (announced)."""
    server = EnvServer(env)
    with socket.create_server((host, port)) as sock:
        actual = sock.getsockname()[1]
        if announce is not None:
            announce(actual)
        conn, _ = sock.accept()
        with conn, conn.makefile("rwb") as stream:
            for raw in stream:
                line = raw.decode("utf-8").strip()
                if not line:
                    continue
                reply, close = server.handle_line(line)
                stream.write((reply + "\n").encode("utf-8"))
                stream.flush()
                if close:
                    return
