"""OSC 1.0 packet codec.

Messages and bundles are encoded to the binary wire format with 4-byte
alignment and big-endian numerics.  Supported type tags are
``i f s b T F N I t`` plus ``h`` and ``d``, which decode and re-encode
losslessly.  Messages without a type-tag string are rejected.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from typing import Any, Union

from .errors import (
    ImmediateHasNoWalltime,
    InvalidAddress,
    MalformedPacket,
    MissingTypeTagString,
    NestingTooDeep,
    Truncated,
    TrailingGarbage,
    UnencodableArgument,
    UnknownPacketType,
    UnknownTypeTag,
)

NTP_UNIX_OFFSET = 2208988800
MAX_BUNDLE_DEPTH = 8
MAX_BLOB_SIZE = 64 * 1024
BUNDLE_HEADER = b"#bundle\x00"

PATTERN_CHARS = frozenset("?*[]{}")
# forbidden in a sendable address on top of the pattern characters
RESERVED_CHARS = frozenset("#,") | PATTERN_CHARS

TAGS_WITH_DATA = frozenset("ifsbthd")
TAGS_WITHOUT_DATA = frozenset("TFNI")
SUPPORTED_TAGS = TAGS_WITH_DATA | TAGS_WITHOUT_DATA


@dataclass(frozen=True, order=True)
class OscTimetag:
    """64-bit NTP timestamp: seconds since 1900 plus a 1/2**32 s fraction."""

    seconds: int
    fraction: int

    def __post_init__(self):
        for name in ("seconds", "fraction"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value < 2**32:
                raise UnencodableArgument(f"timetag {name} out of range: {value!r}")

    @property
    def is_immediate(self) -> bool:
        return self.seconds == 0 and self.fraction == 1

    def to_bytes(self) -> bytes:
        return struct.pack(">II", self.seconds, self.fraction)

    def to_unix_fraction(self) -> Fraction:
        """Exact Unix time of this tag."""
        if self.is_immediate:
            raise ImmediateHasNoWalltime("the IMMEDIATE timetag has no wall-clock time")
        return self.seconds - NTP_UNIX_OFFSET + Fraction(self.fraction, 2**32)


IMMEDIATE = OscTimetag(0, 1)


def timetag_from_walltime(t: float | int | Fraction | datetime) -> OscTimetag:
    """Convert a wall-clock instant (Unix seconds or aware datetime) to a timetag.

    The fractional part is truncated, so the result never lies after ``t``.
    """
    if isinstance(t, datetime):
        if t.tzinfo is None:
            t = t.replace(tzinfo=timezone.utc)
        delta = t - datetime(1970, 1, 1, tzinfo=timezone.utc)
        t = Fraction(delta.days * 86400 + delta.seconds) + Fraction(delta.microseconds, 10**6)
    exact = Fraction(t)
    if exact < 0:
        raise ValueError("instants before the Unix epoch are not supported")
    whole = math.floor(exact)
    fraction = math.floor((exact - whole) * 2**32)
    return OscTimetag(whole + NTP_UNIX_OFFSET, fraction)


def timetag_to_walltime(tt: OscTimetag) -> float:
    """Unix seconds for ``tt``; use :meth:`OscTimetag.to_unix_fraction` when exactness matters."""
    return float(tt.to_unix_fraction())


def _float_bits(tag: str, value: float) -> bytes:
    return struct.pack(">f" if tag == "f" else ">d", value)


@dataclass(frozen=True, eq=False)
class OscArgument:
    """One typed OSC argument.

    ``tag`` is the OSC type-tag character; ``value`` is ``None`` for the
    data-less tags ``T F N I``.  Float arguments compare bit-exactly, so
    NaN payloads survive equality checks.
    """

    tag: str
    value: Any = None

    @classmethod
    def int32(cls, value: int) -> OscArgument:
        return cls("i", value)

    @classmethod
    def float32(cls, value: float) -> OscArgument:
        # store what the wire will carry so logs and decoded packets agree
        if isinstance(value, float):
            try:
                value = struct.unpack(">f", struct.pack(">f", value))[0]
            except OverflowError:
                pass
        return cls("f", value)

    @classmethod
    def string(cls, value: str) -> OscArgument:
        return cls("s", value)

    @classmethod
    def blob(cls, value: bytes) -> OscArgument:
        return cls("b", bytes(value))

    @classmethod
    def timetag(cls, value: OscTimetag) -> OscArgument:
        return cls("t", value)

    def _key(self):
        if self.tag in ("f", "d") and isinstance(self.value, (int, float)):
            try:
                return (self.tag, _float_bits(self.tag, self.value))
            except (OverflowError, struct.error):
                pass
        return (self.tag, self.value)

    def __eq__(self, other):
        if not isinstance(other, OscArgument):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        if self.tag in TAGS_WITHOUT_DATA:
            return f"OscArgument({self.tag!r})"
        return f"OscArgument({self.tag!r}, {self.value!r})"

    def display(self) -> str:
        """Human-readable form used in logs and CSV exports."""
        if self.tag == "T":
            return "true"
        if self.tag == "F":
            return "false"
        if self.tag == "N":
            return "nil"
        if self.tag == "I":
            return "impulse"
        if self.tag == "b":
            return "0x" + self.value.hex()
        if self.tag == "t":
            return f"{self.value.seconds}.{self.value.fraction}"
        if self.tag == "s":
            return self.value if self.value and " " not in self.value else repr(self.value)
        return repr(self.value)


TRUE = OscArgument("T")
FALSE = OscArgument("F")
NIL = OscArgument("N")
IMPULSE = OscArgument("I")


@dataclass(frozen=True)
class OscMessage:
    address: str
    args: tuple[OscArgument, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    @property
    def typetags(self) -> str:
        return "".join(arg.tag for arg in self.args)


@dataclass(frozen=True)
class OscBundle:
    timetag: OscTimetag = IMMEDIATE
    elements: tuple[Union[OscMessage, "OscBundle"], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def messages(self):
        """Yield every message in depth-first order."""
        for element in self.elements:
            if isinstance(element, OscBundle):
                yield from element.messages()
            else:
                yield element


OscPacket = Union[OscMessage, OscBundle]


# ---------------------------------------------------------------- encoding


def _pad(data: bytes) -> bytes:
    return data + b"\x00" * (-len(data) % 4)


def _encode_string(text: str) -> bytes:
    return _pad(text.encode("utf-8") + b"\x00")


def check_sendable_address(address: str) -> None:
    if not isinstance(address, str) or not address.startswith("/"):
        raise InvalidAddress(f"address must start with '/': {address!r}")
    for ch in address:
        if ch == " " or ord(ch) < 0x20 or ord(ch) == 0x7F:
            raise InvalidAddress(f"address contains space or control character: {address!r}")
        if ch in RESERVED_CHARS:
            raise InvalidAddress(f"address contains reserved character {ch!r}: {address!r}")


def _encode_arg(arg: OscArgument) -> bytes:
    tag, value = arg.tag, arg.value
    try:
        if tag == "i":
            if isinstance(value, bool) or not isinstance(value, int):
                raise UnencodableArgument(f"int32 argument must be an int, got {value!r}")
            return struct.pack(">i", value)
        if tag == "h":
            if isinstance(value, bool) or not isinstance(value, int):
                raise UnencodableArgument(f"int64 argument must be an int, got {value!r}")
            return struct.pack(">q", value)
        if tag in ("f", "d"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise UnencodableArgument(f"float argument must be a number, got {value!r}")
            return _float_bits(tag, value)
        if tag == "s":
            if not isinstance(value, str):
                raise UnencodableArgument(f"string argument must be str, got {value!r}")
            if "\x00" in value:
                raise UnencodableArgument("string argument contains a NUL byte")
            return _encode_string(value)
        if tag == "b":
            if not isinstance(value, (bytes, bytearray)):
                raise UnencodableArgument(f"blob argument must be bytes, got {type(value).__name__}")
            if len(value) > MAX_BLOB_SIZE:
                raise UnencodableArgument(f"blob of {len(value)} bytes exceeds {MAX_BLOB_SIZE}")
            return struct.pack(">I", len(value)) + _pad(bytes(value))
        if tag == "t":
            if not isinstance(value, OscTimetag):
                raise UnencodableArgument(f"timetag argument must be OscTimetag, got {value!r}")
            return value.to_bytes()
        if tag in TAGS_WITHOUT_DATA:
            return b""
    except (struct.error, OverflowError) as exc:
        raise UnencodableArgument(f"{tag!r} argument {value!r} out of range") from exc
    raise UnencodableArgument(f"unsupported type tag {tag!r}")


def check_argument(arg: OscArgument) -> None:
    """Raise UnencodableArgument unless ``arg`` can be put on the wire."""
    _encode_arg(arg)


def encode_message(msg: OscMessage) -> bytes:
    check_sendable_address(msg.address)
    body = b"".join(_encode_arg(arg) for arg in msg.args)
    return _encode_string(msg.address) + _encode_string("," + msg.typetags) + body


def encode_bundle(bundle: OscBundle, _depth: int = 1) -> bytes:
    if _depth > MAX_BUNDLE_DEPTH:
        raise NestingTooDeep(f"bundle nesting exceeds {MAX_BUNDLE_DEPTH}")
    parts = [BUNDLE_HEADER, bundle.timetag.to_bytes()]
    for element in bundle.elements:
        if isinstance(element, OscBundle):
            data = encode_bundle(element, _depth + 1)
        else:
            data = encode_message(element)
        parts.append(struct.pack(">I", len(data)))
        parts.append(data)
    return b"".join(parts)


def encode_packet(packet: OscPacket) -> bytes:
    if isinstance(packet, OscBundle):
        return encode_bundle(packet)
    return encode_message(packet)


# ---------------------------------------------------------------- decoding


def _read_string(data: bytes, offset: int) -> tuple[str, int]:
    end = data.find(b"\x00", offset)
    if end < 0:
        raise Truncated(f"unterminated string at offset {offset}")
    try:
        text = data[offset:end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedPacket(f"invalid UTF-8 string at offset {offset}") from exc
    next_offset = end + 1
    next_offset += -next_offset % 4
    if next_offset > len(data):
        raise Truncated(f"string padding runs past end of packet at offset {offset}")
    return text, next_offset


def _take(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise Truncated(f"{what} needs {size} bytes at offset {offset}, {len(data) - offset} left")
    return data[offset : offset + size]


def _decode_args(data: bytes, offset: int, tags: str) -> tuple[list[OscArgument], int]:
    args = []
    for tag in tags:
        if tag == "i":
            args.append(OscArgument(tag, struct.unpack(">i", _take(data, offset, 4, "int32"))[0]))
            offset += 4
        elif tag == "f":
            args.append(OscArgument(tag, struct.unpack(">f", _take(data, offset, 4, "float32"))[0]))
            offset += 4
        elif tag == "h":
            args.append(OscArgument(tag, struct.unpack(">q", _take(data, offset, 8, "int64"))[0]))
            offset += 8
        elif tag == "d":
            args.append(OscArgument(tag, struct.unpack(">d", _take(data, offset, 8, "double"))[0]))
            offset += 8
        elif tag == "t":
            seconds, fraction = struct.unpack(">II", _take(data, offset, 8, "timetag"))
            args.append(OscArgument(tag, OscTimetag(seconds, fraction)))
            offset += 8
        elif tag == "s":
            text, offset = _read_string(data, offset)
            args.append(OscArgument(tag, text))
        elif tag == "b":
            (size,) = struct.unpack(">I", _take(data, offset, 4, "blob size"))
            if size > MAX_BLOB_SIZE:
                raise MalformedPacket(f"blob of {size} bytes exceeds {MAX_BLOB_SIZE}")
            offset += 4
            blob = _take(data, offset, size, "blob")
            offset += size + (-size % 4)
            if offset > len(data):
                raise Truncated("blob padding runs past end of packet")
            args.append(OscArgument(tag, blob))
        elif tag in TAGS_WITHOUT_DATA:
            args.append(OscArgument(tag))
        else:
            raise UnknownTypeTag(f"unsupported type tag {tag!r}")
    return args, offset


def decode_message(data: bytes) -> OscMessage:
    data = bytes(data)
    if not data:
        raise Truncated("empty packet")
    if len(data) % 4:
        raise Truncated(f"packet length {len(data)} is not a multiple of 4")
    if data[:1] != b"/":
        raise MalformedPacket("message must start with '/'")
    address, offset = _read_string(data, 0)
    if any(ch == " " or ord(ch) < 0x20 or ord(ch) == 0x7F for ch in address):
        raise MalformedPacket(f"address contains space or control character: {address!r}")
    if offset >= len(data) or data[offset : offset + 1] != b",":
        raise MissingTypeTagString(f"message {address!r} has no type-tag string")
    tagstring, offset = _read_string(data, offset)
    args, offset = _decode_args(data, offset, tagstring[1:])
    if offset != len(data):
        raise TrailingGarbage(f"{len(data) - offset} unconsumed bytes after message {address!r}")
    return OscMessage(address, tuple(args))


def _decode_bundle(data: bytes, depth: int) -> OscBundle:
    if depth > MAX_BUNDLE_DEPTH:
        raise NestingTooDeep(f"bundle nesting exceeds {MAX_BUNDLE_DEPTH}")
    if len(data) % 4:
        raise Truncated(f"bundle length {len(data)} is not a multiple of 4")
    if _take(data, 0, 8, "bundle header") != BUNDLE_HEADER:
        raise MalformedPacket("bad bundle header")
    seconds, fraction = struct.unpack(">II", _take(data, 8, 8, "bundle timetag"))
    offset = 16
    elements = []
    while offset < len(data):
        (size,) = struct.unpack(">I", _take(data, offset, 4, "element size"))
        offset += 4
        if size == 0 or size % 4:
            raise MalformedPacket(f"bad bundle element size {size}")
        chunk = _take(data, offset, size, "bundle element")
        offset += size
        if chunk[:1] == b"#":
            elements.append(_decode_bundle(chunk, depth + 1))
        elif chunk[:1] == b"/":
            elements.append(decode_message(chunk))
        else:
            raise UnknownPacketType(f"bundle element starts with {chunk[:1]!r}")
    return OscBundle(OscTimetag(seconds, fraction), tuple(elements))


def decode_packet(data: bytes) -> OscPacket:
    data = bytes(data)
    if not data:
        raise Truncated("empty packet")
    first = data[:1]
    if first == b"/":
        return decode_message(data)
    if first == b"#":
        return _decode_bundle(data, 1)
    raise UnknownPacketType(f"packet starts with {first!r}, expected '/' or '#'")


# ---------------------------------------------------------------- JSON forms
#
# Argument values as they appear in logs and tool calls.  Blobs travel as
# hex strings, timetags as [seconds, fraction], data-less tags as
# true/false/null.


def arg_to_json(arg: OscArgument) -> Any:
    if arg.tag == "b":
        return arg.value.hex()
    if arg.tag == "t":
        return [arg.value.seconds, arg.value.fraction]
    if arg.tag == "T":
        return True
    if arg.tag == "F":
        return False
    if arg.tag in "NI":
        return None
    return arg.value


def arg_from_json(tag: str, value: Any) -> OscArgument:
    """Build an argument from its tag and JSON value; raises UnencodableArgument."""
    if tag not in SUPPORTED_TAGS:
        raise UnencodableArgument(f"unsupported type tag {tag!r}")
    if tag in TAGS_WITHOUT_DATA:
        return OscArgument(tag)
    if tag in ("i", "h"):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise UnencodableArgument(f"{tag!r} argument needs an integer, got {value!r}")
    elif tag in ("f", "d"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UnencodableArgument(f"{tag!r} argument needs a number, got {value!r}")
        value = float(value)
    elif tag == "s":
        if not isinstance(value, str):
            raise UnencodableArgument(f"'s' argument needs a string, got {value!r}")
    elif tag == "b":
        try:
            value = bytes.fromhex(value)
        except (TypeError, ValueError):
            raise UnencodableArgument("'b' argument needs a hex string") from None
    elif tag == "t":
        if not (isinstance(value, (list, tuple)) and len(value) == 2):
            raise UnencodableArgument("'t' argument needs [seconds, fraction]")
        value = OscTimetag(*value)
    arg = OscArgument(tag, value)
    _encode_arg(arg)
    return arg


def packet_to_json(packet: OscPacket) -> dict:
    if isinstance(packet, OscBundle):
        return {
            "tt": [packet.timetag.seconds, packet.timetag.fraction],
            "elems": [packet_to_json(e) for e in packet.elements],
        }
    return {
        "addr": packet.address,
        "tags": packet.typetags,
        "args": [arg_to_json(a) for a in packet.args],
    }


def packet_from_json(data: dict) -> OscPacket:
    if "elems" in data:
        return OscBundle(OscTimetag(*data["tt"]), tuple(packet_from_json(e) for e in data["elems"]))
    tags = data.get("tags", "")
    values = data.get("args", [])
    if len(tags) != len(values):
        raise MalformedPacket(f"{len(tags)} type tags but {len(values)} argument values")
    return OscMessage(data["addr"], tuple(arg_from_json(t, v) for t, v in zip(tags, values)))
