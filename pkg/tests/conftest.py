import pytest

from helpers import free_udp_port
from mcp2osc.bridge import Bridge, BridgeConfig
from mcp2osc.peer_sim import EchoPeer, SinkPeer
from mcp2osc.transport import EndpointConfig


@pytest.fixture
def sink():
    with SinkPeer(("127.0.0.1", 0)) as peer:
        yield peer


@pytest.fixture
def make_bridge(tmp_path):
    bridges = []

    def factory(send_port=None, **endpoint):
        endpoint.setdefault("receive_port", free_udp_port())
        endpoint.setdefault("receive_host", "127.0.0.1")
        config = BridgeConfig(
            endpoint=EndpointConfig(send_port=send_port or free_udp_port(), **endpoint),
            log_path=str(tmp_path / f"log{len(bridges)}.jsonl"),
            pattern_path=str(tmp_path / f"patterns{len(bridges)}.json"),
        )
        bridge = Bridge(config)
        bridges.append(bridge)
        return bridge

    yield factory
    for bridge in bridges:
        bridge.close()


@pytest.fixture
def bridge(make_bridge, sink):
    """Bridge whose default send target is the sink peer."""
    return make_bridge(send_port=sink.port)


@pytest.fixture
def echo_bridge(make_bridge):
    with EchoPeer(("127.0.0.1", 0)) as echo:
        b = make_bridge(send_port=echo.port)
        yield b, echo
