"""Wiring of log, pattern store, transport, streams and status endpoint."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

from .control_ops import StreamManager
from .errors import InvalidConfig
from .message_log import MessageLog
from .pattern_store import PatternStore
from .transport import EndpointConfig, Transport


@dataclass(frozen=True)
class BridgeConfig:
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    log_path: str | None = "./mcp2osc-log.jsonl"
    pattern_path: str | None = "./patterns.json"
    dashboard_port: int = 0
    dashboard_host: str = "127.0.0.1"

    @classmethod
    def from_env(cls, env=None) -> BridgeConfig:
        env = os.environ if env is None else env
        raw_port = env.get("MCP2OSC_DASHBOARD_PORT") or "0"
        try:
            dashboard_port = int(raw_port)
        except ValueError:
            raise InvalidConfig(f"MCP2OSC_DASHBOARD_PORT must be an integer, got {raw_port!r}") from None
        if not 0 <= dashboard_port <= 65535:
            raise InvalidConfig("MCP2OSC_DASHBOARD_PORT must be in 0..65535")
        return cls(
            endpoint=EndpointConfig.from_env(env),
            log_path=env.get("MCP2OSC_LOG_PATH") or "./mcp2osc-log.jsonl",
            pattern_path=env.get("MCP2OSC_PATTERN_PATH") or "./patterns.json",
            dashboard_port=dashboard_port,
        )


class Bridge:
    """Everything the tool handlers operate on.  ``dashboard_port=0`` disables monitoring."""

    def __init__(self, config: BridgeConfig):
        self.config = config
        self.started = time.monotonic()
        self.log = MessageLog(config.log_path)
        self.store = PatternStore(config.pattern_path)
        try:
            self.transport = Transport.open(config.endpoint, self.log)
        except Exception:
            self.log.close()
            raise
        self.streams = StreamManager(self.transport)
        self.status_endpoint = None
        if config.dashboard_port:
            from .status import StatusEndpoint

            self.status_endpoint = StatusEndpoint(self, config.dashboard_port, config.dashboard_host)

    def status(self):
        from .status import get_status

        return get_status(self)

    def close(self) -> None:
        self.streams.stop_all()
        if self.status_endpoint is not None:
            self.status_endpoint.close()
        self.transport.close()
        self.log.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
