"""MCP server: newline-delimited JSON-RPC 2.0 over stdio."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any, TextIO

from . import __version__
from .bridge import Bridge, BridgeConfig
from .errors import Mcp2OscError
from .tools import REGISTRY, TOOLS, schema_errors

log = logging.getLogger(__name__)

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603
SERVER_NOT_INITIALIZED = -32002

SUPPORTED_PROTOCOL_VERSIONS = ("2025-06-18", "2025-03-26", "2024-11-05")
SERVER_NAME = "mcp2osc"


def _error(request_id, code: int, message: str, data: Any = None) -> dict:
    err = {"code": code, "message": message}
    if data is not None:
        err["data"] = data
    return {"jsonrpc": "2.0", "id": request_id, "error": err}


def _result(request_id, result: dict) -> dict:
    return {"jsonrpc": "2.0", "id": request_id, "result": result}


def tool_result(payload: dict, is_error: bool = False) -> dict:
    return {
        "content": [{"type": "text", "text": json.dumps(payload, default=str)}],
        "structuredContent": payload,
        "isError": is_error,
    }


class McpServer:
    def __init__(self, bridge: Bridge):
        self.bridge = bridge
        self.initialized = False
        self.client_info: dict | None = None

    # ------------------------------------------------------------ dispatch

    def handle_line(self, line: str | bytes) -> list[dict]:
        """Handle one framed line; returns zero or more responses."""
        try:
            message = json.loads(line)
        except (ValueError, UnicodeDecodeError) as exc:
            return [_error(None, PARSE_ERROR, f"parse error: {exc}")]
        if isinstance(message, list):
            if not message:
                return [_error(None, INVALID_REQUEST, "empty batch")]
            responses = [self.handle_message(m) for m in message]
            return [r for r in responses if r is not None]
        response = self.handle_message(message)
        return [] if response is None else [response]

    def handle_message(self, message: Any) -> dict | None:
        try:
            return self._dispatch(message)
        except Exception as exc:  # last line of defence; the server must not die
            log.exception("unhandled error")
            request_id = message.get("id") if isinstance(message, dict) else None
            return _error(request_id, INTERNAL_ERROR, f"internal error: {type(exc).__name__}: {exc}")

    def _dispatch(self, message: Any) -> dict | None:
        if not isinstance(message, dict):
            return _error(None, INVALID_REQUEST, "request must be a JSON object")
        has_id = "id" in message
        request_id = message.get("id")
        if has_id and (isinstance(request_id, bool) or not isinstance(request_id, (str, int, type(None)))):
            return _error(None, INVALID_REQUEST, "id must be a string, integer or null")
        method = message.get("method")
        if message.get("jsonrpc") != "2.0" or not isinstance(method, str):
            if not has_id and "method" not in message:
                # a stray response from the client; nothing to answer
                return None
            return _error(request_id, INVALID_REQUEST, "expected a JSON-RPC 2.0 request with a method")
        params = message.get("params", {})
        if params is None:
            params = {}
        if not isinstance(params, dict):
            return _error(request_id, INVALID_PARAMS, "params must be an object") if has_id else None

        if not has_id:
            self._notification(method, params)
            return None

        if method == "initialize":
            return _result(request_id, self._initialize(params))
        if method == "ping":
            return _result(request_id, {})
        if method in ("tools/list", "tools/call") and not self.initialized:
            return _error(request_id, SERVER_NOT_INITIALIZED, "server not initialized")
        if method == "tools/list":
            return _result(request_id, {"tools": [t.descriptor() for t in TOOLS]})
        if method == "tools/call":
            return self._call_tool(request_id, params)
        return _error(request_id, METHOD_NOT_FOUND, f"method not found: {method}")

    def _notification(self, method: str, params: dict) -> None:
        if method == "notifications/initialized":
            self.initialized = True
        else:
            log.debug("ignoring notification %s", method)

    def _initialize(self, params: dict) -> dict:
        requested = params.get("protocolVersion")
        version = requested if requested in SUPPORTED_PROTOCOL_VERSIONS else SUPPORTED_PROTOCOL_VERSIONS[0]
        self.client_info = params.get("clientInfo")
        self.initialized = True
        return {
            "protocolVersion": version,
            "capabilities": {"tools": {"listChanged": False}},
            "serverInfo": {"name": SERVER_NAME, "version": __version__},
            "instructions": "Bridge to OpenSoundControl over UDP: send, stream, log, validate and manage OSC patterns.",
        }

    def _call_tool(self, request_id, params: dict) -> dict:
        name = params.get("name")
        if not isinstance(name, str) or name not in REGISTRY:
            return _error(request_id, INVALID_PARAMS, f"unknown tool: {name!r}")
        arguments = params.get("arguments", {})
        if arguments is None:
            arguments = {}
        problems = schema_errors(name, arguments)
        if problems:
            return _error(request_id, INVALID_PARAMS, f"invalid arguments for {name}", problems)
        try:
            payload = REGISTRY[name].handler(self.bridge, arguments)
        except Mcp2OscError as exc:
            payload = {"error": type(exc).__name__, "message": str(exc)}
            violations = getattr(exc, "violations", None)
            if violations:
                payload["violations"] = violations
            return _result(request_id, tool_result(payload, is_error=True))
        except (ValueError, TypeError, KeyError, OverflowError) as exc:
            payload = {"error": type(exc).__name__, "message": str(exc)}
            return _result(request_id, tool_result(payload, is_error=True))
        return _result(request_id, tool_result(payload))

    # ------------------------------------------------------------ stdio loop

    def serve(self, stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout, workers: int = 8) -> None:
        """Read requests until EOF.  Tool calls run concurrently; others inline."""
        write_lock = threading.Lock()

        def emit(responses: list[dict]) -> None:
            if not responses:
                return
            with write_lock:
                for response in responses:
                    stdout.write(json.dumps(response, default=str) + "\n")
                stdout.flush()

        def work(line: str) -> None:
            emit(self.handle_line(line))

        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="tool") as pool:
            for line in stdin:
                if not line.strip():
                    continue
                if _is_tool_call(line) and self.initialized:
                    pool.submit(work, line)
                else:
                    work(line)


def _is_tool_call(line: str) -> bool:
    try:
        message = json.loads(line)
    except ValueError:
        return False
    return isinstance(message, dict) and message.get("method") == "tools/call"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mcp2osc", description="MCP server bridging tool calls to OSC over UDP")
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args(argv)
    # stdout carries the protocol; diagnostics go to stderr
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        bridge = Bridge(BridgeConfig.from_env())
    except Mcp2OscError as exc:
        print(f"mcp2osc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    try:
        McpServer(bridge).serve()
    finally:
        bridge.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
