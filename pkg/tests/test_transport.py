import socket

import pytest
from hypothesis import HealthCheck, given, settings

from helpers import free_udp_block, free_udp_port, wait_for
from mcp2osc.codec import OscArgument, OscBundle, OscMessage, encode_message, encode_packet
from mcp2osc.errors import AllPortsBusy, DatagramTooLarge, InvalidConfig
from mcp2osc.message_log import MessageLog
from mcp2osc.peer_sim import SinkPeer
from mcp2osc.transport import EndpointConfig, Transport, parse_hostport
from strategies import packets

VOLUME = OscMessage("/volume", (OscArgument.float32(0.5),))


def config(**kw):
    kw.setdefault("receive_host", "127.0.0.1")
    kw.setdefault("receive_port", free_udp_port())
    return EndpointConfig(**kw)


def occupy(ports):
    socks = []
    for port in ports:
        s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        s.bind(("127.0.0.1", port))
        socks.append(s)
    return socks


def test_binds_requested_port():
    cfg = config()
    with Transport.open(cfg) as t:
        assert t.bound_port == cfg.receive_port == t.sock.getsockname()[1]
        assert not t.port_fallback and not t.warnings


def test_port_fallback():
    base = free_udp_block(3)
    held = occupy([base])
    try:
        with Transport.open(config(receive_port=base, receive_bind_attempts=3)) as t:
            assert t.bound_port == base + 1 == t.sock.getsockname()[1]
            assert t.port_fallback
            assert "busy" in t.warnings[0]
    finally:
        for s in held:
            s.close()


def test_all_ports_busy():
    base = free_udp_block(3)
    held = occupy(range(base, base + 3))
    try:
        with pytest.raises(AllPortsBusy):
            Transport.open(config(receive_port=base, receive_bind_attempts=3))
    finally:
        for s in held:
            s.close()


@pytest.mark.parametrize(
    "kw", [{"send_port": 0}, {"receive_port": 70000}, {"receive_bind_attempts": 0}, {"max_datagram": 8}]
)
def test_invalid_config(kw):
    with pytest.raises(InvalidConfig):
        EndpointConfig(**kw)


def test_config_from_env():
    cfg = EndpointConfig.from_env({"MCP2OSC_SEND_PORT": "9001", "MCP2OSC_MAX_DATAGRAM": "9000"})
    assert (cfg.send_host, cfg.send_port, cfg.receive_port, cfg.max_datagram) == ("127.0.0.1", 9001, 7500, 9000)
    with pytest.raises(InvalidConfig):
        EndpointConfig.from_env({"MCP2OSC_SEND_PORT": "abc"})


def test_parse_hostport():
    assert parse_hostport("localhost:9000") == ("localhost", 9000)
    assert parse_hostport("[::1]:9000") == ("::1", 9000)
    for bad in ("9000", "host:", "host:99999"):
        with pytest.raises(InvalidConfig):
            parse_hostport(bad)


def test_send_identical_bytes(sink):
    log = MessageLog()
    with Transport.open(config(send_port=sink.port), log) as t:
        report = t.send(VOLUME)
        assert wait_for(lambda: sink.snapshot()[0])
    assert sink.snapshot()[0] == [encode_message(VOLUME)]
    assert report.bytes == 16 and report.dest == f"127.0.0.1:{sink.port}"
    (entry,) = log.tail()
    assert entry.direction == "out" and entry.packet == VOLUME and entry.seq == report.seq


def test_datagram_too_large(sink):
    bundle = OscBundle(elements=tuple(OscMessage(f"/m/{k}", (OscArgument.blob(b"x" * 80),)) for k in range(20)))
    assert len(encode_packet(bundle)) > 1472
    log = MessageLog()
    with Transport.open(config(send_port=sink.port), log) as t:
        with pytest.raises(DatagramTooLarge):
            t.send(bundle)
    assert log.tail() == []


def test_dest_override():
    with SinkPeer() as first, SinkPeer() as second:
        with Transport.open(config(send_port=first.port)) as t:
            t.send(VOLUME, dest=f"127.0.0.1:{second.port}")
            assert wait_for(lambda: second.snapshot()[0])
        assert first.snapshot()[0] == []


def test_poll_idle():
    with Transport.open(config()) as t:
        assert t.poll_received() == []


def test_poll_order_and_logging():
    log = MessageLog()
    with Transport.open(config(), log) as t:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as peer:
            for k in range(3):
                peer.sendto(encode_message(OscMessage(f"/n/{k}")), ("127.0.0.1", t.bound_port))
            assert wait_for(lambda: len(log.tail()) == 3)
        got = t.poll_received()
        assert [d.packet.address for d in got] == ["/n/0", "/n/1", "/n/2"]
        assert t.poll_received() == []
    assert [e.direction for e in log.tail()] == ["in"] * 3


def test_malformed_datagram_is_kept():
    log = MessageLog()
    with Transport.open(config(), log) as t:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as peer:
            peer.sendto(b"not osc!", ("127.0.0.1", t.bound_port))
        assert wait_for(lambda: log.tail())
        (datagram,) = t.poll_received()
    assert datagram.packet is None and "UnknownPacketType" in datagram.error
    (entry,) = log.tail()
    assert entry.raw == b"not osc!" and entry.error == datagram.error
    assert log.snapshot()[1]["decode_errors"] == 1


@pytest.fixture(scope="module")
def loop_pair():
    peer = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    peer.bind(("127.0.0.1", 0))
    peer.settimeout(2)
    with Transport.open(config(send_port=peer.getsockname()[1], max_datagram=65507)) as t:
        yield t, peer
    peer.close()


@settings(max_examples=500, suppress_health_check=[HealthCheck.function_scoped_fixture], deadline=None)
@given(packets)
def test_loopback_identity(loop_pair, packet):
    t, peer = loop_pair
    t.send(packet)
    data, _ = peer.recvfrom(65536)
    assert data == encode_packet(packet)
