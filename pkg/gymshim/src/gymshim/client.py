"""Gym-shaped client for an environment served over the line-JSON protocol.

The server is a separate process (spawned here, or reached over TCP); this
client is a byte-faithful relay with no scheduling logic of its own, so a
trajectory driven through it is identical to one driven natively. One
request is in flight at a time.
"""

from __future__ import annotations

import json
import socket
import subprocess

SUPPORTED_PROTOCOL = 1


class ProtocolMismatch(Exception):
    """Server speaks a protocol version this client does not."""


class ServerDied(Exception):
    """The environment process went away mid-conversation."""


class RemoteEnvError(Exception):
    """The server answered with an error payload."""

    def __init__(self, code: str, message: str, payload: dict | None = None):
        self.code = code
        self.payload = payload or {}
        super().__init__(f"{code}: {message}")


class _StdioTransport:
    def __init__(self, cmd: list[str]):
        self.proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True,
            bufsize=1)

    def request(self, doc: dict) -> dict:
        if self.proc.poll() is not None:
            raise ServerDied(f"server exited with code {self.proc.returncode}")
        self.proc.stdin.write(json.dumps(doc) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise ServerDied("server closed its output stream")
        return json.loads(line)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.stream = self.sock.makefile("rw", encoding="utf-8", newline="\n")

    def request(self, doc: dict) -> dict:
        try:
            self.stream.write(json.dumps(doc) + "\n")
            self.stream.flush()
            line = self.stream.readline()
        except OSError as exc:
            raise ServerDied(str(exc)) from exc
        if not line:
            raise ServerDied("server closed the connection")
        return json.loads(line)

    def close(self) -> None:
        try:
            self.stream.close()
            self.sock.close()
        except OSError:
            pass


class RemoteEnv:
    """reset() -> (obs, info); step(action) -> (obs, reward, done, info)."""

    def __init__(self, cmd: list[str] | None = None, host: str | None = None,
                 port: int | None = None, supported_protocol: int = SUPPORTED_PROTOCOL):
        if (cmd is None) == (host is None):
            raise ValueError("give either a server command or a host/port")
        self.supported_protocol = supported_protocol
        if cmd is not None:
            self._transport = _StdioTransport(cmd)
        else:
            self._transport = _TcpTransport(host, port)
        self._steps = 0
        self.spec = self._fetch_spec()

    def _fetch_spec(self) -> dict:
        reply = self._request({"cmd": "spec"})
        spec = reply["spec"]
        server_protocol = spec.get("protocol")
        if server_protocol != self.supported_protocol:
            self.close()
            raise ProtocolMismatch(
                f"server protocol {server_protocol!r}, client supports "
                f"{self.supported_protocol!r}")
        return spec

    def _request(self, doc: dict) -> dict:
        doc = dict(doc)
        doc["v"] = self.supported_protocol
        try:
            reply = self._transport.request(doc)
        except ServerDied:
            raise ServerDied(
                f"server died after {self._steps} completed step(s)") from None
        if "error" in reply:
            err = reply["error"]
            if err.get("code") == "protocol-mismatch":
                raise ProtocolMismatch(err.get("message", "protocol mismatch"))
            raise RemoteEnvError(err.get("code", "error"),
                                 err.get("message", ""), reply)
        if reply.get("v") != self.supported_protocol:
            raise ProtocolMismatch(
                f"response carried protocol {reply.get('v')!r}")
        return reply

    def reset(self):
        reply = self._request({"cmd": "reset"})
        self._steps = 0
        return reply["obs"], reply["info"]

    def step(self, action):
        reply = self._request({"cmd": "step", "action": action})
        self._steps += 1
        return reply["obs"], reply["reward"], reply["done"], reply["info"]

    def legal_actions(self, info: dict) -> list:
        return info.get("legal", [])

    def close(self) -> None:
        try:
            self._transport.request({"cmd": "close"})
        except Exception:
            pass
        self._transport.close()

    def __enter__(self) -> "RemoteEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
