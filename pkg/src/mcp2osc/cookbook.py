"""Replay documented tool-call transcripts against a loopback harness.

A transcript is a JSON file describing one prompt recipe: the prompt a user
would type, the tool calls it should turn into, and matchers over the results.
Each transcript runs against a fresh bridge whose default send target is a
sink peer, with an echo peer and an OSCQuery fixture alongside.

Step kinds (exactly one per step):

``call``
    ``{"call": tool, "arguments": {...}, "expect": {...}, "is_error": false,
    "capture": {"var": "path"}}`` or, for a JSON-RPC failure,
    ``{"call": tool, "arguments": {...}, "error": -32602}``.  Matchers in
    ``expect`` run against the tool's structured result.
``observe``
    ``{"observe": "sink" | "log", "expect": {...}, "timeout_s": 2.0}``; polls
    until every matcher holds or the timeout passes.  The log view may be
    narrowed with ``"direction"`` and ``"address"``.
``inject``
    ``{"inject": [{"address": ..., "args": [...]}, {"raw": "hex"}], "interval_s": 0.0}``
    sends messages (or raw datagrams) from a scratch socket to the bridge's
    receive port.
``sleep_s``
    ``{"sleep_s": 0.2}``.

``expect`` maps a dotted path (``"messages.0.args"``, ``"*"`` fans out over
every element, ``""`` is the value itself) to a matcher object holding any of
``exact``, ``range`` ([lo, hi], inclusive), ``count`` (an int or [lo, hi]
applied to ``len``) and ``regex`` (``re.search`` on a string).  Strings of the
form ``${name}`` in arguments are replaced by harness values: ``sink_port``,
``echo_port``, ``oscquery_port``, ``receive_port`` and any captured variable.
"""

from __future__ import annotations

import argparse
import difflib
import json
import re
import socket
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .bridge import Bridge, BridgeConfig
from .codec import OscMessage, decode_packet, encode_message, packet_to_json
from .errors import MatcherFailed, OscError
from .peer_sim import EchoPeer, OscQueryFixture, SinkPeer
from .server import McpServer
from .tools import parse_args
from .transport import EndpointConfig

MATCHER_KEYS = {"exact", "range", "count", "regex"}
_VAR = re.compile(r"\$\{(\w+)\}")
_MISSING = object()


@dataclass
class TranscriptResult:
    name: str
    path: Path
    passed: bool
    detail: str = ""
    elapsed_s: float = 0.0


# ---------------------------------------------------------------- matchers


def resolve(value: Any, path: str) -> list[Any]:
    """Values at ``path``; ``*`` fans out, a missing key yields the sentinel."""
    values = [value]
    for part in path.split(".") if path else []:
        nxt = []
        for v in values:
            if part == "*":
                if isinstance(v, dict):
                    nxt.extend(v.values())
                elif isinstance(v, list):
                    nxt.extend(v)
                else:
                    nxt.append(_MISSING)
            elif isinstance(v, dict):
                nxt.append(v.get(part, _MISSING))
            elif isinstance(v, list) and part.lstrip("-").isdigit() and -len(v) <= int(part) < len(v):
                nxt.append(v[int(part)])
            else:
                nxt.append(_MISSING)
        values = nxt
    return values


def _pretty(value: Any) -> str:
    return "<missing>" if value is _MISSING else json.dumps(value, indent=2, sort_keys=True, default=str)


def _diff(expected: Any, actual: Any) -> str:
    lines = difflib.unified_diff(
        _pretty(expected).splitlines(), _pretty(actual).splitlines(), "expected", "actual", lineterm=""
    )
    return "\n".join(lines)


def _in_range(value, bounds) -> bool:
    lo, hi = bounds
    return isinstance(value, (int, float)) and not isinstance(value, bool) and lo <= value <= hi


def check_matcher(value: Any, matcher: dict) -> list[str]:
    """Problems with one value; empty when every clause holds."""
    unknown = set(matcher) - MATCHER_KEYS
    if unknown or not matcher:
        raise ValueError(f"matcher needs one of {sorted(MATCHER_KEYS)}, got {sorted(matcher)}")
    if value is _MISSING:
        return ["missing"]
    problems = []
    if "exact" in matcher and value != matcher["exact"]:
        problems.append(_diff(matcher["exact"], value))
    if "range" in matcher and not _in_range(value, matcher["range"]):
        problems.append(f"{value!r} outside {matcher['range']}")
    if "count" in matcher:
        if not hasattr(value, "__len__"):
            problems.append(f"count of non-collection {value!r}")
        else:
            want = matcher["count"]
            ok = len(value) == want if isinstance(want, int) else _in_range(len(value), want)
            if not ok:
                problems.append(f"count {len(value)}, expected {want}")
    if "regex" in matcher:
        if not isinstance(value, str) or re.search(matcher["regex"], value) is None:
            problems.append(f"{value!r} does not match /{matcher['regex']}/")
    return problems


def check_expectations(subject: Any, expect: dict) -> list[str]:
    problems = []
    for path, matcher in expect.items():
        values = resolve(subject, path)
        if not values:
            problems.append(f"{path or '<root>'}: no elements")
        for value in values:
            for problem in check_matcher(value, matcher):
                problems.append(f"{path or '<root>'}: {problem}")
    return problems


# ---------------------------------------------------------------- harness


def _free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def substitute(value: Any, variables: dict) -> Any:
    if isinstance(value, str):
        whole = _VAR.fullmatch(value)
        if whole:
            return variables[whole.group(1)]
        return _VAR.sub(lambda m: str(variables[m.group(1)]), value)
    if isinstance(value, list):
        return [substitute(v, variables) for v in value]
    if isinstance(value, dict):
        return {k: substitute(v, variables) for k, v in value.items()}
    return value


class Harness:
    """Fresh bridge plus peers for one transcript."""

    def __init__(self):
        self._tmp = tempfile.TemporaryDirectory(prefix="mcp2osc-cookbook-")
        self.sink = SinkPeer().start()
        self.echo = EchoPeer().start()
        self.oscquery = OscQueryFixture().start()
        tmp = Path(self._tmp.name)
        self.bridge = Bridge(
            BridgeConfig(
                endpoint=EndpointConfig(send_port=self.sink.port, receive_port=_free_port(), receive_host="127.0.0.1"),
                log_path=str(tmp / "log.jsonl"),
                pattern_path=str(tmp / "patterns.json"),
            )
        )
        self.server = McpServer(self.bridge)
        self._ids = 0
        self.rpc("initialize", {"protocolVersion": "2025-06-18", "capabilities": {}})
        self.variables = {
            "sink_port": self.sink.port,
            "echo_port": self.echo.port,
            "oscquery_port": self.oscquery.port,
            "receive_port": self.bridge.transport.bound_port,
        }

    def rpc(self, method: str, params: dict) -> dict:
        self._ids += 1
        line = json.dumps({"jsonrpc": "2.0", "id": self._ids, "method": method, "params": params})
        (response,) = self.server.handle_line(line)
        return response

    def sink_view(self) -> dict:
        datagrams, messages = self.sink.snapshot()
        return {
            "datagrams": [{"bytes": len(d), "packet": _packet_or_none(d)} for d in datagrams],
            "messages": [packet_to_json(m) for m in messages],
            "violations": list(self.sink.violations),
            "errors": list(self.sink.errors),
        }

    def log_view(self, direction=None, address=None) -> dict:
        entries = [e.to_json() for e in self.bridge.log.tail()]
        if direction:
            entries = [e for e in entries if e["dir"] == direction]
        if address:
            entries = [e for e in entries if e["addr"] == address]
        return {"entries": entries}

    def inject(self, specs: list[dict], interval_s: float = 0.0) -> None:
        target = ("127.0.0.1", self.bridge.transport.bound_port)
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
            for spec in specs:
                if "raw" in spec:
                    data = bytes.fromhex(spec["raw"])
                else:
                    args, _ = parse_args(spec.get("args", []), spec.get("types"))
                    data = encode_message(OscMessage(spec["address"], tuple(args)))
                s.sendto(data, target)
                if interval_s:
                    time.sleep(interval_s)

    def close(self) -> None:
        self.bridge.close()
        self.oscquery.stop()
        self.echo.stop()
        self.sink.stop()
        self._tmp.cleanup()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _packet_or_none(data: bytes) -> dict | None:
    try:
        return packet_to_json(decode_packet(data))
    except OscError:
        return None


# ---------------------------------------------------------------- replay


def _step_kind(step: dict) -> str:
    kinds = [k for k in ("call", "observe", "inject", "sleep_s") if k in step]
    if len(kinds) != 1:
        raise ValueError(f"step needs exactly one of call/observe/inject/sleep_s, got {sorted(step)}")
    return kinds[0]


def _run_call(harness: Harness, step: dict) -> list[str]:
    arguments = substitute(step.get("arguments", {}), harness.variables)
    response = harness.rpc("tools/call", {"name": step["call"], "arguments": arguments})
    if "error" in step:
        got = response.get("error", {}).get("code")
        if got != step["error"]:
            return [f"expected JSON-RPC error {step['error']}, got {_pretty(response)}"]
        return check_expectations(response["error"], step.get("expect", {}))
    if "error" in response:
        return [f"unexpected JSON-RPC error {_pretty(response['error'])}"]
    result = response["result"]
    payload = result["structuredContent"]
    problems = []
    if result["isError"] != step.get("is_error", False):
        problems.append(f"isError {result['isError']}, payload {_pretty(payload)}")
    problems += check_expectations(payload, step.get("expect", {}))
    for var, path in step.get("capture", {}).items():
        (value,) = resolve(payload, path)
        if value is _MISSING:
            problems.append(f"capture {var}: {path} missing")
        else:
            harness.variables[var] = value
    return problems


def _run_observe(harness: Harness, step: dict) -> list[str]:
    deadline = time.monotonic() + step.get("timeout_s", 2.0)
    while True:
        if step["observe"] == "sink":
            view = harness.sink_view()
        elif step["observe"] == "log":
            view = harness.log_view(step.get("direction"), step.get("address"))
        else:
            raise ValueError(f"unknown observation {step['observe']!r}")
        problems = check_expectations(view, step.get("expect", {}))
        if not problems or time.monotonic() >= deadline:
            return problems
        time.sleep(0.02)


def replay_transcript(path: str | Path) -> None:
    """Run one transcript; raises MatcherFailed listing every mismatch of the first failing step."""
    path = Path(path)
    doc = json.loads(path.read_text())
    with Harness() as harness:
        for index, step in enumerate(doc["steps"]):
            kind = _step_kind(step)
            if kind == "call":
                problems = _run_call(harness, step)
            elif kind == "observe":
                problems = _run_observe(harness, step)
            elif kind == "inject":
                harness.inject(substitute(step["inject"], harness.variables), step.get("interval_s", 0.0))
                problems = []
            else:
                time.sleep(step["sleep_s"])
                problems = []
            if problems:
                label = step.get(kind) if kind in ("call", "observe") else kind
                raise MatcherFailed(f"{path.name} step {index} ({kind} {label}):\n" + "\n".join(problems))


def load_transcripts(directory: str | Path) -> list[Path]:
    return sorted(Path(directory).glob("*.json"))


def replay_transcripts(directory: str | Path) -> list[TranscriptResult]:
    results = []
    for path in load_transcripts(directory):
        name = json.loads(path.read_text()).get("name", path.stem)
        start = time.monotonic()
        try:
            replay_transcript(path)
        except MatcherFailed as exc:
            results.append(TranscriptResult(name, path, False, str(exc), time.monotonic() - start))
        else:
            results.append(TranscriptResult(name, path, True, "", time.monotonic() - start))
    return results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mcp2osc-cookbook", description="Replay tool-call transcripts.")
    parser.add_argument("directory", nargs="?", default="docs/transcripts")
    args = parser.parse_args(argv)
    results = replay_transcripts(args.directory)
    if not results:
        print(f"no transcripts in {args.directory}", file=sys.stderr)
        return 2
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.elapsed_s:.2f} s)")
        if not r.passed:
            print("  " + r.detail.replace("\n", "\n  "))
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
