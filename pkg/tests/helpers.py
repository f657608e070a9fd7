"""Shared socket and timing helpers for the test suite."""

import socket
import time


def free_udp_port():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def free_udp_block(n):
    """First port of n consecutive free UDP ports."""
    for _ in range(200):
        base = free_udp_port()
        if base + n > 65535:
            continue
        socks = []
        try:
            for k in range(n):
                s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                socks.append(s)
                s.bind(("0.0.0.0", base + k))
            return base
        except OSError:
            continue
        finally:
            for s in socks:
                s.close()
    raise RuntimeError("no free port block")


def wait_for(predicate, timeout=2.0, interval=0.005):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return predicate()


def _float_param(name, lo=0.0, hi=1.0, default=None):
    spec = {"type": "f", "name": name, "min": lo, "max": hi}
    if default is not None:
        spec["default"] = default
    return spec


PLAYER_RECORDS = [
    {"address": "/player/transport/play", "description": "Start playback", "category": "audio", "tags": ["transport"]},
    {"address": "/player/transport/stop", "description": "Stop playback", "category": "audio", "tags": ["transport"]},
    {"address": "/player/transport/pause", "description": "Pause playback", "category": "audio", "tags": ["transport"]},
    {"address": "/player/transport/next", "description": "Skip to next track", "category": "audio", "tags": ["transport"]},
    {"address": "/player/transport/previous", "description": "Back to previous track", "category": "audio", "tags": ["transport"]},
    {
        "address": "/player/transport/seek",
        "description": "Seek to position in seconds",
        "parameters": [_float_param("seconds", 0.0, 86400.0)],
        "category": "audio",
        "tags": ["transport"],
    },
    {"address": "/player/volume/master", "description": "Master volume", "parameters": [_float_param("level", default=0.8)], "category": "audio", "tags": ["mix"]},
    {"address": "/player/volume/mute", "description": "Mute toggle", "parameters": [{"type": "i", "min": 0, "max": 1}], "category": "audio", "tags": ["mix"]},
    {"address": "/player/volume/fade", "description": "Fade volume over time", "parameters": [_float_param("target"), _float_param("seconds", 0.0, 60.0)], "category": "audio", "tags": ["mix"]},
    {"address": "/player/eq/low", "description": "Low shelf gain in dB", "parameters": [_float_param("gain", -12.0, 12.0)], "category": "audio", "tags": ["eq"]},
    {"address": "/player/eq/mid", "description": "Mid band gain in dB", "parameters": [_float_param("gain", -12.0, 12.0)], "category": "audio", "tags": ["eq"]},
    {"address": "/player/eq/high", "description": "High shelf gain in dB", "parameters": [_float_param("gain", -12.0, 12.0)], "category": "audio", "tags": ["eq"]},
    {"address": "/player/playlist/select", "description": "Select playlist by index", "parameters": [{"type": "i", "name": "index", "min": 0, "max": 999}], "category": "audio", "tags": ["library"]},
    {"address": "/player/playlist/shuffle", "description": "Shuffle on or off", "parameters": [{"type": "i", "min": 0, "max": 1}], "category": "audio", "tags": ["library"]},
    {"address": "/player/playlist/repeat", "description": "Repeat mode", "parameters": [{"type": "s", "enum_values": ["off", "one", "all"]}], "category": "audio", "tags": ["library"]},
    {"address": "/player/track/load", "description": "Load track by path", "parameters": [{"type": "s", "name": "path"}], "category": "audio", "tags": ["library"]},
    {"address": "/player/track/rate", "description": "Playback rate", "parameters": [_float_param("rate", 0.25, 4.0, 1.0)], "category": "audio", "tags": ["transport"]},
    {"address": "/player/track/pitch", "description": "Pitch shift in semitones", "parameters": [_float_param("semitones", -24.0, 24.0)], "category": "audio", "tags": ["fx"]},
]
