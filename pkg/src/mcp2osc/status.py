"""Read-only monitoring endpoint.

``GET /status`` returns a JSON snapshot; ``GET /live`` upgrades to a
websocket that carries one JSON log entry per text frame.  Each
subscriber has a bounded queue; one that falls 1000 frames behind is
disconnected so monitoring never pushes back on the control path.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Response
from websockets.sync.server import ServerConnection, serve

if TYPE_CHECKING:
    from .bridge import Bridge

log = logging.getLogger(__name__)

SUBSCRIBER_BACKLOG = 1000
SEND_BUFFER_BYTES = 64 * 1024


@dataclass
class StatusSnapshot:
    uptime_s: float
    bound_receive_port: int
    send_target: str
    counters: dict[str, int]
    active_streams: int
    pattern_count: int
    log_file_size_bytes: int
    degraded_flags: list[str] = field(default_factory=list)
    high_water_seq: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def get_status(bridge: Bridge) -> StatusSnapshot:
    seq, counters = bridge.log.snapshot()
    flags = sorted(bridge.log.degraded)
    if bridge.transport.port_fallback:
        flags.append("port_fallback")
    return StatusSnapshot(
        uptime_s=round(time.monotonic() - bridge.started, 3),
        bound_receive_port=bridge.transport.bound_port,
        send_target=bridge.transport.send_target,
        counters=counters,
        active_streams=len(bridge.streams.active()),
        pattern_count=len(bridge.store),
        log_file_size_bytes=bridge.log.file_size(),
        degraded_flags=flags,
        high_water_seq=seq,
        warnings=list(bridge.transport.warnings),
    )


class _Subscriber:
    def __init__(self, conn: ServerConnection):
        self.conn = conn
        self.frames: queue.Queue[str | None] = queue.Queue(maxsize=SUBSCRIBER_BACKLOG)
        self.dropped = False


class StatusEndpoint:
    def __init__(self, bridge: Bridge, port: int, host: str = "127.0.0.1"):
        self.bridge = bridge
        self._subs: set[_Subscriber] = set()
        self._lock = threading.Lock()
        self.dropped_subscribers = 0
        self.server = serve(
            self._handle_ws,
            host,
            port,
            process_request=self._process_request,
            compression=None,
            ping_interval=None,
        )
        self.port = self.server.socket.getsockname()[1]
        self._thread = threading.Thread(target=self.server.serve_forever, name="status-endpoint", daemon=True)
        bridge.log.subscribe(self._on_entry)
        self._thread.start()

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subs)

    def close(self) -> None:
        self.bridge.log.unsubscribe(self._on_entry)
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            try:
                sub.frames.put_nowait(None)
            except queue.Full:
                self._drop(sub)
        self.server.shutdown()
        self._thread.join(timeout=2)

    # ------------------------------------------------------------ HTTP

    def _process_request(self, conn: ServerConnection, request):
        path = request.path.split("?", 1)[0]
        if path == "/status":
            body = json.dumps(get_status(self.bridge).to_json()).encode()
            headers = Headers(
                [("Content-Type", "application/json"), ("Content-Length", str(len(body))), ("Connection", "close")]
            )
            return Response(200, "OK", headers, body)
        if path == "/live":
            return None
        return conn.respond(404, "not found\n")

    # ------------------------------------------------------------ live feed

    def _on_entry(self, entry) -> None:
        # runs under the log's writer lock, so frames are queued in seq order
        if not self._subs:
            return
        frame = json.dumps(entry.to_json(), separators=(",", ":"))
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            try:
                sub.frames.put_nowait(frame)
            except queue.Full:
                self._drop(sub)

    def _drop(self, sub: _Subscriber) -> None:
        with self._lock:
            if sub.dropped:
                return
            sub.dropped = True
            self._subs.discard(sub)
            self.dropped_subscribers += 1
        log.warning("dropping live-feed subscriber %s after %d-frame backlog", sub.conn.remote_address, SUBSCRIBER_BACKLOG)
        try:
            # unblocks a handler stuck in send()
            sub.conn.socket.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass

    def _handle_ws(self, conn: ServerConnection) -> None:
        try:
            conn.socket.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, SEND_BUFFER_BYTES)
        except OSError:
            pass
        sub = _Subscriber(conn)
        with self._lock:
            self._subs.add(sub)
        try:
            while not sub.dropped:
                try:
                    frame = sub.frames.get(timeout=0.5)
                except queue.Empty:
                    try:
                        conn.recv(timeout=0)
                    except TimeoutError:
                        pass
                    continue
                if frame is None:
                    break
                conn.send(frame)
        except (ConnectionClosed, OSError):
            pass
        finally:
            with self._lock:
                self._subs.discard(sub)
