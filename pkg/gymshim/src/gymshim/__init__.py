"""Gym-shaped client for the shopbench environment wire protocol."""

__version__ = "0.1.0"

from .client import (  # noqa: F401
    ProtocolMismatch, RemoteEnv, RemoteEnvError, ServerDied, SUPPORTED_PROTOCOL,
)
