"""Higher-level operations built on the codec, address engine and transport."""

from __future__ import annotations

import itertools
import json
import logging
import math
import random
import struct
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Literal

from .address import validate_address
from .codec import IMMEDIATE, OscArgument, OscBundle, OscMessage, OscTimetag, encode_message
from .errors import (
    DatagramTooLarge,
    InvalidSpec,
    MalformedNamespace,
    NotOscQuery,
    TooManyActiveStreams,
    UnknownStream,
    Unreachable,
    ValidationRefused,
)
from .pattern_store import PatternStore
from .transport import ReceivedDatagram, Transport

log = logging.getLogger(__name__)

BUNDLE_OVERHEAD = 16  # "#bundle\0" + timetag
ELEMENT_OVERHEAD = 4  # size prefix
PING_ADDRESS = "/mcp2osc/ping"
PONG_ADDRESS = "/mcp2osc/pong"
MAX_STREAMS = 16


# ---------------------------------------------------------------- batches


def fragment(encoded: list[bytes], max_datagram: int) -> list[list[int]]:
    """Greedy, order-preserving split of encoded messages into bundle-sized groups.

    Returns groups of indices into ``encoded``.
    """
    groups: list[list[int]] = []
    current: list[int] = []
    size = BUNDLE_OVERHEAD
    for index, data in enumerate(encoded):
        need = ELEMENT_OVERHEAD + len(data)
        if BUNDLE_OVERHEAD + need > max_datagram:
            raise DatagramTooLarge(
                f"message {index} needs {BUNDLE_OVERHEAD + need} bytes in a bundle, limit is {max_datagram}"
            )
        if current and size + need > max_datagram:
            groups.append(current)
            current, size = [], BUNDLE_OVERHEAD
        current.append(index)
        size += need
    if current:
        groups.append(current)
    return groups


def send_batch(
    transport: Transport,
    messages: Iterable[OscMessage],
    as_bundle: bool = True,
    *,
    store: PatternStore | None = None,
    force: bool = False,
    dest: str | None = None,
    timetag: OscTimetag | None = None,
) -> dict:
    """Send messages as IMMEDIATE bundles (split to fit the datagram limit) or one by one.

    Messages are checked against ``store`` first; any violation refuses the
    whole batch unless ``force`` is set.  A future ``timetag`` is accepted
    but the bundle still goes out immediately.
    """
    messages = list(messages)
    warnings: list[str] = []
    violations: list[dict] = []
    if store is not None:
        for index, msg in enumerate(messages):
            result = store.validate_args(msg.address, msg.args)
            warnings.extend(f"{msg.address}: {w}" for w in result.warnings)
            if not result.ok:
                violations.append({"index": index, "address": msg.address, "violations": result.violations})
        if violations and not force:
            raise ValidationRefused(
                f"{len(violations)} message(s) fail pattern validation; resend with force to override",
                violations,
            )
    if timetag is not None and not timetag.is_immediate:
        warnings.append("timetag ignored: bundles are dispatched immediately with the IMMEDIATE tag")
    encoded = [encode_message(m) for m in messages]
    report = {"messages": len(messages), "datagrams": 0, "total_bytes": 0, "sizes": [], "seqs": []}
    if as_bundle:
        for group in fragment(encoded, transport.config.max_datagram):
            bundle = OscBundle(IMMEDIATE, tuple(messages[i] for i in group))
            sent = transport.send(bundle, dest)
            report["sizes"].append(sent.bytes)
            report["seqs"].append(sent.seq)
    else:
        for msg, data in zip(messages, encoded):
            if len(data) > transport.config.max_datagram:
                raise DatagramTooLarge(f"message {msg.address!r} is {len(data)} bytes")
        for msg in messages:
            sent = transport.send(msg, dest)
            report["sizes"].append(sent.bytes)
            report["seqs"].append(sent.seq)
    report["datagrams"] = len(report["sizes"])
    report["total_bytes"] = sum(report["sizes"])
    report["warnings"] = warnings
    if violations:
        report["violations"] = violations
    return report


# ---------------------------------------------------------------- streams

Shape = Literal["linear", "exponential", "ease-in-out"]
EXP_CURVATURE = 5.0


@dataclass(frozen=True)
class StreamSpec:
    address: str
    start_value: float
    end_value: float
    duration_s: float
    rate_hz: float = 50.0
    shape: Shape = "linear"

    def __post_init__(self):
        check = validate_address(self.address)
        if check.kind != "concrete":
            raise InvalidSpec(f"stream address must be concrete: {check.reason or check.kind}")
        for name in ("start_value", "end_value", "duration_s", "rate_hz"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidSpec(f"{name} must be a finite number")
        for name in ("start_value", "end_value"):
            try:
                struct.pack(">f", getattr(self, name))
            except OverflowError:
                raise InvalidSpec(f"{name} does not fit a float32") from None
        if not 0 < self.duration_s <= 600:
            raise InvalidSpec("duration_s must be in (0, 600]")
        if not 1 <= self.rate_hz <= 200:
            raise InvalidSpec("rate_hz must be in [1, 200]")
        if self.shape not in ("linear", "exponential", "ease-in-out"):
            raise InvalidSpec(f"unknown shape {self.shape!r}")

    @property
    def count(self) -> int:
        # the epsilon keeps 50 * 1.5 from flooring to 74 on binary rounding
        return math.floor(self.rate_hz * self.duration_s + 1e-9) + 1

    def value_at(self, k: int) -> float:
        n = self.count
        if k >= n - 1:
            return float(self.end_value)
        u = k / (n - 1)
        if self.shape == "exponential":
            u = math.expm1(EXP_CURVATURE * u) / math.expm1(EXP_CURVATURE)
        elif self.shape == "ease-in-out":
            u = (1 - math.cos(math.pi * u)) / 2
        return self.start_value + (self.end_value - self.start_value) * u


class _Stream:
    def __init__(self, stream_id: str, spec: StreamSpec, transport: Transport, dest: str | None):
        self.id = stream_id
        self.spec = spec
        self.transport = transport
        self.dest = dest
        self.sent = 0
        self.state = "running"
        self.error: str | None = None
        self.started = time.monotonic()
        self.stopped_at: float | None = None
        self._stop = threading.Event()
        self.thread = threading.Thread(target=self._run, name=f"stream-{stream_id}", daemon=True)

    def _run(self) -> None:
        spec = self.spec
        period = 1.0 / spec.rate_hz
        t0 = time.monotonic()
        try:
            for k in range(spec.count):
                # absolute deadlines keep the mean period free of drift
                delay = t0 + k * period - time.monotonic()
                if delay > 0 and self._stop.wait(delay):
                    break
                if self._stop.is_set():
                    break
                msg = OscMessage(spec.address, (OscArgument.float32(spec.value_at(k)),))
                self.transport.send(msg, self.dest)
                self.sent += 1
        except Exception as exc:
            self.error = f"{type(exc).__name__}: {exc}"
            log.warning("stream %s failed: %s", self.id, self.error)
        self.stopped_at = time.monotonic()
        if self.error:
            self.state = "failed"
        elif self._stop.is_set():
            self.state = "stopped"
        else:
            self.state = "completed"

    def report(self) -> dict:
        end = self.stopped_at if self.stopped_at is not None else time.monotonic()
        return {
            "stream_id": self.id,
            "state": self.state,
            "address": self.spec.address,
            "sent": self.sent,
            "planned": self.spec.count,
            "elapsed_s": round(end - self.started, 4),
            "error": self.error,
        }


class StreamManager:
    """Runs up to ``max_active`` streams concurrently, each on its own thread."""

    def __init__(self, transport: Transport, max_active: int = MAX_STREAMS):
        self.transport = transport
        self.max_active = max_active
        self._streams: dict[str, _Stream] = {}
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def active(self) -> list[str]:
        with self._lock:
            return [sid for sid, s in self._streams.items() if s.thread.is_alive()]

    def start(self, spec: StreamSpec, dest: str | None = None) -> str:
        with self._lock:
            running = sum(1 for s in self._streams.values() if s.thread.is_alive())
            if running >= self.max_active:
                raise TooManyActiveStreams(f"{running} streams already running (limit {self.max_active})")
            stream = _Stream(f"stream-{next(self._ids)}", spec, self.transport, dest)
            self._streams[stream.id] = stream
            stream.thread.start()
            return stream.id

    def stop(self, stream_id: str, timeout: float = 2.0) -> dict:
        """Signal a stream to stop (idempotent) and return its final report."""
        with self._lock:
            stream = self._streams.get(stream_id)
        if stream is None:
            raise UnknownStream(f"no stream {stream_id!r}")
        stream._stop.set()
        stream.thread.join(timeout)
        return stream.report()

    def report(self, stream_id: str) -> dict:
        with self._lock:
            stream = self._streams.get(stream_id)
        if stream is None:
            raise UnknownStream(f"no stream {stream_id!r}")
        return stream.report()

    def wait(self, stream_id: str, timeout: float | None = None) -> dict:
        with self._lock:
            stream = self._streams[stream_id]
        stream.thread.join(timeout)
        return stream.report()

    def stop_all(self) -> None:
        for sid in list(self._streams):
            self.stop(sid)


# ---------------------------------------------------------------- bidirectional test


@dataclass
class TestReport:
    outcome: Literal["pass", "fail"]
    probe_address: str
    nonce: int
    round_trip_ms: float | None
    sent_at: datetime
    received_at: datetime | None = None
    failure_reason: str | None = None
    detail: str | None = None

    __test__ = False  # not a pytest class

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome,
            "probe_address": self.probe_address,
            "nonce": self.nonce,
            "round_trip_ms": self.round_trip_ms,
            "sent_at": self.sent_at.isoformat(timespec="milliseconds"),
            "received_at": self.received_at.isoformat(timespec="milliseconds") if self.received_at else None,
            "failure_reason": self.failure_reason,
            "detail": self.detail,
        }


def run_bidirectional_test(
    transport: Transport,
    timeout_ms: int = 1000,
    probe_address: str = PING_ADDRESS,
    *,
    dest: str | None = None,
    rng: random.Random | None = None,
) -> TestReport:
    """Send a ping carrying a random nonce and wait for the matching pong.

    A pong with another nonce does not end the wait (it may be a late
    answer to an earlier probe) but is reported if nothing better arrives.
    """
    nonce = (rng or random.SystemRandom()).randint(-(2**31), 2**31 - 1)
    matched = threading.Event()
    seen: dict[str, object] = {}

    def on_datagram(dgram: ReceivedDatagram) -> None:
        if dgram.packet is None:
            seen.setdefault("decode-error", dgram.error)
            return
        msgs = [dgram.packet] if isinstance(dgram.packet, OscMessage) else list(dgram.packet.messages())
        for msg in msgs:
            if msg.address != PONG_ADDRESS:
                continue
            args = msg.args
            if len(args) == 1 and args[0].tag == "i" and args[0].value == nonce:
                if not matched.is_set():
                    seen["match"] = dgram
                    matched.set()
            else:
                seen.setdefault("wrong-nonce", [a.value for a in args])

    transport.add_listener(on_datagram)
    try:
        sent_wall = datetime.now(timezone.utc)
        report = transport.send(OscMessage(probe_address, (OscArgument.int32(nonce),)), dest)
        sent_mono = report.sent_mono
        deadline = sent_mono / 1e9 + timeout_ms / 1000
        matched.wait(max(0.0, deadline - time.monotonic()))
    finally:
        transport.remove_listener(on_datagram)

    if matched.is_set():
        dgram = seen["match"]
        rtt = (dgram.received_mono - sent_mono) / 1e6
        if rtt <= timeout_ms:
            return TestReport("pass", probe_address, nonce, round(rtt, 3), sent_wall, dgram.received_wall)
    if "wrong-nonce" in seen:
        return TestReport(
            "fail", probe_address, nonce, None, sent_wall,
            failure_reason="wrong-nonce", detail=f"pong carried {seen['wrong-nonce']}, expected {nonce}",
        )
    if "decode-error" in seen:
        return TestReport(
            "fail", probe_address, nonce, None, sent_wall,
            failure_reason="decode-error", detail=str(seen["decode-error"]),
        )
    return TestReport(
        "fail", probe_address, nonce, None, sent_wall,
        failure_reason="timeout", detail=f"no pong within {timeout_ms} ms",
    )


# ---------------------------------------------------------------- OSCQuery

ACCESS_FLAGS = {0: (False, False), 1: (True, False), 2: (False, True), 3: (True, True)}
KNOWN_ATTRIBUTES = {"FULL_PATH", "CONTENTS", "TYPE", "VALUE", "DESCRIPTION", "ACCESS", "RANGE", "HOST_INFO", "RETURN_TYPE"}


@dataclass
class NamespaceNode:
    full_path: str
    description: str | None = None
    type_signature: str | None = None
    current_value: list | None = None
    access: dict | None = None
    range: list | None = None
    return_type: str | None = None
    extra: dict = field(default_factory=dict)
    children: dict[str, NamespaceNode] = field(default_factory=dict)

    def leaves(self) -> list[NamespaceNode]:
        if not self.children:
            return [self]
        out = []
        for child in self.children.values():
            out.extend(child.leaves())
        return out

    def walk(self):
        yield self
        for child in self.children.values():
            yield from child.walk()

    def to_json(self) -> dict:
        out: dict = {"full_path": self.full_path}
        for key in ("description", "type_signature", "current_value", "access", "range", "return_type"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.extra:
            out["extra"] = self.extra
        if self.children:
            out["children"] = {name: c.to_json() for name, c in self.children.items()}
        return out


def _child_path(parent: str, name: str) -> str:
    return parent.rstrip("/") + "/" + name


def parse_namespace(doc, path: str = "/") -> NamespaceNode:
    """Turn an OSCQuery JSON document into a node tree."""
    if not isinstance(doc, dict):
        raise NotOscQuery(f"expected a JSON object, got {type(doc).__name__}")
    if not doc:
        return NamespaceNode(full_path=path)
    if "FULL_PATH" not in doc:
        raise NotOscQuery("document has no FULL_PATH attribute")
    return _parse_node(doc, doc["FULL_PATH"], None)


def _parse_node(doc: dict, default_path: str, parent: str | None) -> NamespaceNode:
    full_path = doc.get("FULL_PATH", default_path)
    if not isinstance(full_path, str) or not full_path.startswith("/"):
        raise MalformedNamespace(f"bad FULL_PATH {full_path!r}")
    if parent is not None and full_path != default_path:
        raise MalformedNamespace(f"{full_path!r} should be {default_path!r} under parent {parent!r}")
    node = NamespaceNode(full_path=full_path)
    if "TYPE" in doc:
        if not isinstance(doc["TYPE"], str):
            raise MalformedNamespace(f"{full_path}: TYPE must be a string")
        node.type_signature = doc["TYPE"]
    if "DESCRIPTION" in doc:
        node.description = str(doc["DESCRIPTION"])
    if "VALUE" in doc:
        value = doc["VALUE"]
        node.current_value = value if isinstance(value, list) else [value]
    if "ACCESS" in doc:
        flags = ACCESS_FLAGS.get(doc["ACCESS"])
        if flags is None:
            raise MalformedNamespace(f"{full_path}: ACCESS must be 0..3")
        node.access = {"read": flags[0], "write": flags[1]}
    if "RANGE" in doc:
        node.range = doc["RANGE"] if isinstance(doc["RANGE"], list) else [doc["RANGE"]]
    if "RETURN_TYPE" in doc:
        if not isinstance(doc["RETURN_TYPE"], str):
            raise MalformedNamespace(f"{full_path}: RETURN_TYPE must be a string")
        node.return_type = doc["RETURN_TYPE"]
    node.extra = {k: v for k, v in doc.items() if k not in KNOWN_ATTRIBUTES}
    contents = doc.get("CONTENTS")
    if contents is not None:
        if not isinstance(contents, dict):
            raise MalformedNamespace(f"{full_path}: CONTENTS must be an object")
        for name, child in contents.items():
            if not isinstance(child, dict):
                raise MalformedNamespace(f"{full_path}/{name}: node must be an object")
            node.children[name] = _parse_node(child, _child_path(full_path, name), full_path)
    return node


def discover_namespace(host: str, port: int, path: str = "/", timeout: float = 3.0) -> NamespaceNode:
    """Fetch and parse the OSCQuery namespace served at ``http://host:port/path``."""
    if not path.startswith("/"):
        path = "/" + path
    url = f"http://{host}:{port}{path}"
    try:
        with urllib.request.urlopen(url, timeout=timeout) as response:
            body = response.read()
    except urllib.error.HTTPError as exc:
        raise NotOscQuery(f"{url} answered HTTP {exc.code}") from None
    except (urllib.error.URLError, OSError) as exc:
        reason = getattr(exc, "reason", exc)
        raise Unreachable(f"{url}: {reason}") from None
    try:
        doc = json.loads(body)
    except (ValueError, UnicodeDecodeError):
        raise NotOscQuery(f"{url} did not return JSON") from None
    return parse_namespace(doc, path)
