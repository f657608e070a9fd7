import json
import socket
import threading
import urllib.error
import urllib.request

import pytest
from websockets.sync.client import connect

from helpers import free_udp_block, wait_for
from mcp2osc.codec import OscArgument, OscMessage
from mcp2osc.message_log import LogEntry
from mcp2osc.status import SUBSCRIBER_BACKLOG, StatusEndpoint, get_status


@pytest.fixture
def endpoint(bridge):
    ep = StatusEndpoint(bridge, 0)
    yield ep
    ep.close()


def fetch_status(port):
    with urllib.request.urlopen(f"http://127.0.0.1:{port}/status", timeout=5) as resp:
        assert resp.headers["Content-Type"] == "application/json"
        return json.loads(resp.read())


def msg(k):
    return OscMessage(f"/live/{k}", (OscArgument.int32(k),))


def test_fresh_status(bridge):
    snap = get_status(bridge)
    assert snap.counters == {"sent": 0, "received": 0, "decode_errors": 0}
    assert snap.uptime_s >= 0 and snap.degraded_flags == []
    assert snap.bound_receive_port == bridge.transport.bound_port


def test_status_counts_sends(bridge, endpoint, sink):
    for k in range(5):
        bridge.transport.send(msg(k))
    status = fetch_status(endpoint.port)
    assert status["counters"]["sent"] == 5
    assert status["high_water_seq"] == 5
    assert status["send_target"] == f"127.0.0.1:{sink.port}"
    assert status["log_file_size_bytes"] > 0


def test_status_reports_port_fallback(make_bridge):
    base = free_udp_block(2)
    held = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    held.bind(("127.0.0.1", base))
    try:
        bridge = make_bridge(receive_port=base, receive_bind_attempts=2)
        ep = StatusEndpoint(bridge, 0)
        try:
            status = fetch_status(ep.port)
        finally:
            ep.close()
    finally:
        held.close()
    assert status["bound_receive_port"] == base + 1
    assert "port_fallback" in status["degraded_flags"]


def test_unknown_path(endpoint):
    with pytest.raises(urllib.error.HTTPError) as info:
        urllib.request.urlopen(f"http://127.0.0.1:{endpoint.port}/nope", timeout=5)
    assert info.value.code == 404


def test_live_feed_in_order(bridge, endpoint, sink):
    with connect(f"ws://127.0.0.1:{endpoint.port}/live") as ws:
        assert wait_for(lambda: endpoint.subscriber_count == 1)
        for k in range(3):
            bridge.transport.send(msg(k))
        frames = [json.loads(ws.recv(timeout=5)) for _ in range(3)]
    assert [f["seq"] for f in frames] == [1, 2, 3]
    assert [LogEntry.from_json(f).packet for f in frames] == [msg(k) for k in range(3)]


def test_no_subscribers_is_harmless(bridge, endpoint):
    for k in range(10):
        bridge.log.record("out", "x:1", msg(k))
    assert endpoint.subscriber_count == 0 and bridge.log.high_water == 10


def stalled_client(port):
    """A websocket client that completes the handshake and then never reads."""
    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    s.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 4096)
    s.connect(("127.0.0.1", port))
    s.sendall(
        b"GET /live HTTP/1.1\r\nHost: 127.0.0.1\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
        b"Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n"
    )
    head = b""
    while b"\r\n\r\n" not in head:
        head += s.recv(1)
    assert head.startswith(b"HTTP/1.1 101")
    return s


def test_stalled_subscriber_is_dropped(bridge, endpoint):
    total = SUBSCRIBER_BACKLOG * 4
    received = []
    with connect(f"ws://127.0.0.1:{endpoint.port}/live") as healthy:

        def reader():
            while len(received) < total:
                received.append(json.loads(healthy.recv(timeout=20))["seq"])

        thread = threading.Thread(target=reader)
        thread.start()
        stalled = stalled_client(endpoint.port)
        try:
            assert wait_for(lambda: endpoint.subscriber_count == 2)
            for k in range(total):
                bridge.log.record("out", "127.0.0.1:1", msg(k))
            assert wait_for(lambda: endpoint.dropped_subscribers == 1, timeout=10)
            thread.join(timeout=30)
        finally:
            stalled.close()
    assert received == list(range(1, total + 1))
    assert endpoint.subscriber_count == 0 or endpoint.dropped_subscribers == 1
