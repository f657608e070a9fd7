"""UDP transport for OSC packets.

One socket serves both directions: it is bound to the receive port and
also used for sending, so peers that answer to the datagram's source
reach the bridge.  A background thread drains the socket, logs every
datagram (malformed ones included) and queues it for :meth:`poll_received`.
"""

from __future__ import annotations

import collections
import logging
import os
import socket
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable

from .codec import OscPacket, decode_packet, encode_packet
from .errors import AllPortsBusy, DatagramTooLarge, InvalidConfig, LogError, NetworkError, OscError
from .message_log import MessageLog

log = logging.getLogger(__name__)

MAX_UDP_PAYLOAD = 65507
DEFAULT_MAX_DATAGRAM = 1472


@dataclass(frozen=True)
class EndpointConfig:
    send_host: str = "127.0.0.1"
    send_port: int = 7400
    receive_port: int = 7500
    receive_bind_attempts: int = 5
    max_datagram: int = DEFAULT_MAX_DATAGRAM
    receive_host: str = "0.0.0.0"

    def __post_init__(self):
        for name in ("send_port", "receive_port"):
            port = getattr(self, name)
            if not isinstance(port, int) or not 1 <= port <= 65535:
                raise InvalidConfig(f"{name} must be in 1..65535, got {port!r}")
        if self.receive_bind_attempts < 1:
            raise InvalidConfig("receive_bind_attempts must be >= 1")
        if not 16 <= self.max_datagram <= MAX_UDP_PAYLOAD:
            raise InvalidConfig(f"max_datagram must be in 16..{MAX_UDP_PAYLOAD}")

    @classmethod
    def from_env(cls, env=None) -> EndpointConfig:
        env = os.environ if env is None else env

        def number(name, default):
            raw = env.get(name)
            if raw in (None, ""):
                return default
            try:
                return int(raw)
            except ValueError:
                raise InvalidConfig(f"{name} must be an integer, got {raw!r}") from None

        return cls(
            send_host=env.get("MCP2OSC_SEND_HOST") or "127.0.0.1",
            send_port=number("MCP2OSC_SEND_PORT", 7400),
            receive_port=number("MCP2OSC_RECEIVE_PORT", 7500),
            max_datagram=number("MCP2OSC_MAX_DATAGRAM", DEFAULT_MAX_DATAGRAM),
            receive_bind_attempts=number("MCP2OSC_BIND_ATTEMPTS", 5),
        )


def parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = str(text).rpartition(":")
    if not sep or not host:
        raise InvalidConfig(f"expected host:port, got {text!r}")
    try:
        number = int(port)
    except ValueError:
        raise InvalidConfig(f"bad port in {text!r}") from None
    if not 1 <= number <= 65535:
        raise InvalidConfig(f"port out of range in {text!r}")
    return host.strip("[]"), number


def format_hostport(addr: tuple) -> str:
    return f"{addr[0]}:{addr[1]}"


@dataclass(frozen=True)
class ReceivedDatagram:
    data: bytes
    source: str
    received_mono: int
    received_wall: datetime
    packet: OscPacket | None = None
    error: str | None = None


@dataclass(frozen=True)
class SendReport:
    dest: str
    bytes: int
    seq: int | None
    sent_mono: int

    def to_json(self) -> dict:
        return {"dest": self.dest, "bytes": self.bytes, "seq": self.seq}


class Transport:
    """Bound UDP socket plus receive thread.  Use :meth:`open` to create."""

    def __init__(self, config: EndpointConfig, sock: socket.socket, log_: MessageLog | None):
        self.config = config
        self.sock = sock
        self.log = log_
        self.bound_port = sock.getsockname()[1]
        self.warnings: list[str] = []
        self._queue: collections.deque[ReceivedDatagram] = collections.deque(maxlen=10_000)
        self._queue_lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._listeners: list[Callable[[ReceivedDatagram], None]] = []
        self._closed = threading.Event()
        self._thread = threading.Thread(target=self._receive_loop, name="osc-receive", daemon=True)

    @classmethod
    def open(cls, config: EndpointConfig, log_: MessageLog | None = None) -> Transport:
        last_error = None
        for k in range(config.receive_bind_attempts):
            port = config.receive_port + k
            if port > 65535:
                break
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            try:
                sock.bind((config.receive_host, port))
            except OSError as exc:
                sock.close()
                last_error = exc
                continue
            # the timeout lets the receive thread notice close()
            sock.settimeout(0.1)
            transport = cls(config, sock, log_)
            if k:
                message = f"receive port {config.receive_port} busy, bound {port} instead"
                log.warning(message)
                transport.warnings.append(message)
            transport._thread.start()
            return transport
        raise AllPortsBusy(
            f"ports {config.receive_port}..{config.receive_port + config.receive_bind_attempts - 1} "
            f"are all busy ({last_error})"
        )

    @property
    def port_fallback(self) -> bool:
        return self.bound_port != self.config.receive_port

    @property
    def send_target(self) -> str:
        return f"{self.config.send_host}:{self.config.send_port}"

    def close(self) -> None:
        self._closed.set()
        try:
            self.sock.close()
        except OSError:
            pass
        if self._thread.is_alive() and threading.current_thread() is not self._thread:
            self._thread.join(timeout=2)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # ------------------------------------------------------------ sending

    def send(self, packet: OscPacket | bytes, dest: str | tuple[str, int] | None = None) -> SendReport:
        """Encode and send one datagram, then log it as outbound."""
        data = packet if isinstance(packet, (bytes, bytearray)) else encode_packet(packet)
        if len(data) > self.config.max_datagram:
            raise DatagramTooLarge(f"{len(data)}-byte packet exceeds the {self.config.max_datagram}-byte limit")
        if dest is None:
            target = (self.config.send_host, self.config.send_port)
        elif isinstance(dest, str):
            target = parse_hostport(dest)
        else:
            target = dest
        with self._send_lock:
            # stamped before the syscall: a loopback reply can be received before sendto returns
            sent = time.monotonic_ns()
            try:
                self.sock.sendto(data, target)
            except OSError as exc:
                raise NetworkError(f"send to {format_hostport(target)} failed: {exc}") from exc
        seq = None
        if self.log is not None:
            logged = packet if not isinstance(packet, (bytes, bytearray)) else None
            if logged is None:
                try:
                    logged = decode_packet(data)
                except OscError:
                    pass
            try:
                seq = self.log.record("out", format_hostport(target), logged, raw=None if logged else bytes(data))
            except LogError as exc:
                log.warning("log append failed: %s", exc)
        return SendReport(format_hostport(target), len(data), seq, sent)

    # ------------------------------------------------------------ receiving

    def add_listener(self, callback: Callable[[ReceivedDatagram], None]) -> None:
        """Call ``callback`` from the receive thread for every datagram."""
        self._listeners.append(callback)

    def remove_listener(self, callback: Callable[[ReceivedDatagram], None]) -> None:
        try:
            self._listeners.remove(callback)
        except ValueError:
            pass

    def poll_received(self) -> list[ReceivedDatagram]:
        """Drain datagrams that arrived since the last poll, in arrival order."""
        with self._queue_lock:
            drained = list(self._queue)
            self._queue.clear()
        return drained

    def _receive_loop(self) -> None:
        while not self._closed.is_set():
            try:
                data, addr = self.sock.recvfrom(MAX_UDP_PAYLOAD + 1)
            except OSError:
                if self._closed.is_set():
                    return
                continue
            self._handle(data, addr)

    def _handle(self, data: bytes, addr) -> None:
        mono = time.monotonic_ns()
        wall = datetime.now(timezone.utc)
        packet, error = None, None
        try:
            packet = decode_packet(data)
        except OscError as exc:
            error = f"{type(exc).__name__}: {exc}"
        datagram = ReceivedDatagram(data, format_hostport(addr), mono, wall, packet, error)
        if self.log is not None:
            try:
                self.log.record("in", datagram.source, packet, raw=data if error else None, error=error, wall_time=wall)
            except LogError as exc:
                log.warning("log append failed: %s", exc)
        with self._queue_lock:
            self._queue.append(datagram)
        for callback in list(self._listeners):
            try:
                callback(datagram)
            except Exception:
                log.exception("datagram listener failed")
