"""MCP server bridging LLM tool calls to OpenSoundControl over UDP."""

__version__ = "0.1.0"

from .address import AddressPattern, TemplateSpec, IntRange, expand_template, match, validate_address
from .codec import (
    IMMEDIATE,
    OscArgument,
    OscBundle,
    OscMessage,
    OscTimetag,
    decode_message,
    decode_packet,
    encode_bundle,
    encode_message,
    encode_packet,
    timetag_from_walltime,
    timetag_to_walltime,
)

__all__ = [
    "AddressPattern",
    "IMMEDIATE",
    "IntRange",
    "OscArgument",
    "OscBundle",
    "OscMessage",
    "OscTimetag",
    "TemplateSpec",
    "decode_message",
    "decode_packet",
    "encode_bundle",
    "encode_message",
    "encode_packet",
    "expand_template",
    "match",
    "timetag_from_walltime",
    "timetag_to_walltime",
    "validate_address",
]
