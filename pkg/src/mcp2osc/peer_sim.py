"""Desk-scale OSC peer used by integration tests and for manual poking.

Modes:

* ``echo``: answers ``/mcp2osc/ping <nonce>`` with ``/mcp2osc/pong <nonce>``
  and echoes any other datagram byte for byte.
* ``robotics``: streams sinusoidal joint positions and their derivative.
* ``sink``: prints what arrives and flags pattern violations.
* ``oscquery``: serves a fixed OSCQuery namespace over HTTP.
"""

from __future__ import annotations

import argparse
import json
import math
import socket
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .codec import OscArgument, OscBundle, OscMessage, decode_packet, encode_message
from .control_ops import PING_ADDRESS, PONG_ADDRESS
from .errors import BadFixture, InvalidConfig, OscError, PortBusy
from .pattern_store import PatternStore
from .transport import MAX_UDP_PAYLOAD, format_hostport, parse_hostport

SIGNAL_HZ = 0.2


def joint_position(joint: int, t: float) -> float:
    return math.sin(2 * math.pi * SIGNAL_HZ * t + joint * math.pi / 8)


def joint_velocity(joint: int, t: float) -> float:
    return 2 * math.pi * SIGNAL_HZ * math.cos(2 * math.pi * SIGNAL_HZ * t + joint * math.pi / 8)


class UdpPeer:
    """Bound UDP socket with a receive thread; subclasses override :meth:`handle`."""

    def __init__(self, listen: tuple[str, int] = ("127.0.0.1", 0), reply_to: tuple[str, int] | None = None):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self.sock.bind(listen)
        except OSError as exc:
            self.sock.close()
            raise PortBusy(f"cannot bind {format_hostport(listen)}: {exc}") from None
        self.sock.settimeout(0.1)
        self.reply_to = reply_to
        self.received = 0
        self._closed = threading.Event()
        self._threads = [threading.Thread(target=self._receive_loop, daemon=True)]

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    @property
    def port(self) -> int:
        return self.address[1]

    def start(self):
        for thread in self._threads:
            thread.start()
        return self

    def stop(self) -> None:
        self._closed.set()
        for thread in self._threads:
            if thread.is_alive() and thread is not threading.current_thread():
                thread.join(timeout=2)
        self.sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def wait_closed(self, timeout: float | None = None) -> bool:
        return self._closed.wait(timeout)

    def _receive_loop(self) -> None:
        while not self._closed.is_set():
            try:
                data, addr = self.sock.recvfrom(MAX_UDP_PAYLOAD + 1)
            except OSError:
                continue
            self.received += 1
            self.handle(data, addr)

    def handle(self, data: bytes, addr) -> None:
        pass

    def send(self, data: bytes, dest=None) -> None:
        try:
            self.sock.sendto(data, dest or self.reply_to)
        except OSError:
            pass


class EchoPeer(UdpPeer):
    def handle(self, data, addr):
        target = self.reply_to or addr
        try:
            packet = decode_packet(data)
        except OscError:
            packet = None
        if isinstance(packet, OscMessage) and packet.address == PING_ADDRESS:
            if len(packet.args) == 1 and packet.args[0].tag == "i":
                self.send(encode_message(OscMessage(PONG_ADDRESS, packet.args)), target)
                return
        self.send(data, target)


class SinkPeer(UdpPeer):
    """Collects decoded messages; with a pattern file, checks each one."""

    def __init__(self, listen=("127.0.0.1", 0), reply_to=None, patterns: str | None = None, out=None):
        super().__init__(listen, reply_to)
        self.store = PatternStore(patterns) if patterns else None
        self.out = out
        self.datagrams: list[bytes] = []
        self.messages: list[OscMessage] = []
        self.violations: list[str] = []
        self.errors: list[str] = []
        self._lock = threading.Lock()

    def _print(self, line: str) -> None:
        if self.out is not None:
            print(line, file=self.out, flush=True)

    def handle(self, data, addr):
        try:
            packet = decode_packet(data)
        except OscError as exc:
            with self._lock:
                self.datagrams.append(data)
                self.errors.append(f"{type(exc).__name__}: {exc}")
            self._print(f"{format_hostport(addr)} MALFORMED {type(exc).__name__}: {exc}")
            return
        msgs = list(packet.messages()) if isinstance(packet, OscBundle) else [packet]
        with self._lock:
            self.datagrams.append(data)
            self.messages.extend(msgs)
        for msg in msgs:
            args = " ".join(a.display() for a in msg.args)
            self._print(f"{format_hostport(addr)} {msg.address} ,{msg.typetags} {args}".rstrip())
            if self.store is not None:
                result = self.store.validate_args(msg.address, msg.args)
                # as the receiver, an unmapped word where a number is stored is a real problem
                problems = result.violations + [w for w in result.warnings if "word value" in w]
                for problem in problems:
                    line = f"VIOLATION {msg.address}: {problem}"
                    with self._lock:
                        self.violations.append(line)
                    self._print(line)

    def snapshot(self) -> tuple[list[bytes], list[OscMessage]]:
        with self._lock:
            return list(self.datagrams), list(self.messages)


class RoboticsPeer(UdpPeer):
    """Emits ``/robot/joint<j>/position`` and ``/velocity`` for each joint at ``rate_hz``."""

    def __init__(self, listen=("127.0.0.1", 0), reply_to=None, joints: int = 3, rate_hz: float = 10.0,
                 duration: float | None = None):
        if not 1 <= joints <= 16:
            raise InvalidConfig("joints must be in 1..16")
        if not 1 <= rate_hz <= 100:
            raise InvalidConfig("rate must be in 1..100 Hz")
        if reply_to is None:
            raise InvalidConfig("robotics mode needs --reply-to")
        super().__init__(listen, reply_to)
        self.joints = joints
        self.rate_hz = rate_hz
        self.duration = duration
        self.ticks = 0
        self._threads.append(threading.Thread(target=self._generate, daemon=True))

    def _generate(self) -> None:
        period = 1.0 / self.rate_hz
        t0 = time.monotonic()
        k = 0
        while not self._closed.is_set():
            t = k * period
            if self.duration is not None and t >= self.duration:
                break
            delay = t0 + t - time.monotonic()
            if delay > 0 and self._closed.wait(delay):
                return
            for j in range(1, self.joints + 1):
                pos = OscMessage(f"/robot/joint{j}/position", (OscArgument.float32(joint_position(j, t)),))
                vel = OscMessage(f"/robot/joint{j}/velocity", (OscArgument.float32(joint_velocity(j, t)),))
                self.send(encode_message(pos))
                self.send(encode_message(vel))
            self.ticks += 1
            k += 1
        self._closed.set()


DEFAULT_NAMESPACE = {
    "FULL_PATH": "/",
    "DESCRIPTION": "peer-sim synthesizer",
    "CONTENTS": {
        "synth": {
            "FULL_PATH": "/synth",
            "CONTENTS": {
                "volume": {
                    "FULL_PATH": "/synth/volume",
                    "TYPE": "f",
                    "VALUE": [0.5],
                    "RANGE": [{"MIN": 0.0, "MAX": 1.0}],
                    "ACCESS": 3,
                    "DESCRIPTION": "master volume",
                },
                "cutoff": {
                    "FULL_PATH": "/synth/cutoff",
                    "TYPE": "f",
                    "VALUE": [1200.0],
                    "RANGE": [{"MIN": 20.0, "MAX": 20000.0}],
                    "ACCESS": 3,
                    "DESCRIPTION": "filter cutoff in Hz",
                },
                "voice": {
                    "FULL_PATH": "/synth/voice",
                    "TYPE": "is",
                    "VALUE": [1, "grain"],
                    "ACCESS": 2,
                    "DESCRIPTION": "voice index and preset name",
                },
            },
        }
    },
}


def load_fixture(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise BadFixture(f"cannot read OSCQuery fixture {path}: {exc}") from None
    if not isinstance(doc, dict) or (doc and "FULL_PATH" not in doc):
        raise BadFixture(f"{path} is not an OSCQuery namespace document")
    return doc


def _lookup(doc: dict, path: str):
    node = doc
    for part in [p for p in path.split("/") if p]:
        contents = node.get("CONTENTS") or {}
        if part not in contents:
            return None
        node = contents[part]
    return node


class OscQueryFixture:
    """HTTP server answering GET <path> with the matching namespace subtree."""

    def __init__(self, listen=("127.0.0.1", 0), doc: dict | None = None):
        self.doc = DEFAULT_NAMESPACE if doc is None else doc
        fixture = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                path = self.path.split("?", 1)[0]
                node = _lookup(fixture.doc, path)
                if node is None:
                    self.send_error(404)
                    return
                body = json.dumps(node).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        try:
            self.server = ThreadingHTTPServer(listen, Handler)
        except OSError as exc:
            raise PortBusy(f"cannot bind {format_hostport(listen)}: {exc}") from None
        self.server.daemon_threads = True
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    def start(self):
        self._thread.start()
        return self

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def build_peer(mode: str, listen, reply_to=None, *, joints=3, rate=10.0, patterns=None, fixture=None,
               duration=None, out=None):
    if mode == "echo":
        return EchoPeer(listen, reply_to)
    if mode == "sink":
        return SinkPeer(listen, reply_to, patterns, out=out)
    if mode == "robotics":
        return RoboticsPeer(listen, reply_to, joints, rate, duration)
    if mode in ("oscquery", "oscquery-fixture"):
        return OscQueryFixture(listen, load_fixture(fixture) if fixture else None)
    raise InvalidConfig(f"unknown mode {mode!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="peer-sim", description="OSC test peer")
    parser.add_argument("--mode", required=True, choices=["echo", "robotics", "sink", "oscquery"])
    parser.add_argument("--listen", default="127.0.0.1:9000", help="host:port to bind")
    parser.add_argument("--reply-to", help="host:port for replies and generated traffic")
    parser.add_argument("--joints", type=int, default=3)
    parser.add_argument("--rate", type=float, default=10.0, help="robotics sample rate in Hz")
    parser.add_argument("--patterns", help="pattern store file checked by sink mode")
    parser.add_argument("--fixture", help="OSCQuery JSON document for oscquery mode")
    parser.add_argument("--duration", type=float, help="stop after this many seconds")
    args = parser.parse_args(argv)

    try:
        listen = parse_hostport(args.listen)
        reply_to = parse_hostport(args.reply_to) if args.reply_to else None
        peer = build_peer(args.mode, listen, reply_to, joints=args.joints, rate=args.rate,
                          patterns=args.patterns, fixture=args.fixture, duration=args.duration,
                          out=sys.stdout)
    except (InvalidConfig, PortBusy, BadFixture) as exc:
        print(f"peer-sim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    peer.start()
    host = listen[0]
    print(f"peer-sim {args.mode} listening on {host}:{peer.port}", flush=True)
    deadline = None if args.duration is None else time.monotonic() + args.duration
    try:
        while deadline is None or time.monotonic() < deadline:
            if isinstance(peer, UdpPeer) and peer.wait_closed(0.2):
                break
            if not isinstance(peer, UdpPeer):
                time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        peer.stop()
    if isinstance(peer, RoboticsPeer):
        print(f"peer-sim robotics sent {peer.ticks} ticks", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
