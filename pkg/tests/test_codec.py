import math
import struct
from datetime import datetime, timezone
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle_encoder
from mcp2osc.codec import (
    IMMEDIATE,
    NTP_UNIX_OFFSET,
    OscArgument,
    OscBundle,
    OscMessage,
    OscTimetag,
    arg_from_json,
    arg_to_json,
    decode_message,
    decode_packet,
    encode_bundle,
    encode_message,
    encode_packet,
    packet_from_json,
    packet_to_json,
    timetag_from_walltime,
    timetag_to_walltime,
)
from mcp2osc.errors import (
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
from strategies import arguments, messages, packets, timetags, to_oracle

VOLUME = OscMessage("/volume", (OscArgument.float32(0.5),))
MUTE = OscMessage("/ch/3/mute", (OscArgument.int32(1),))


def test_encode_volume_example():
    data = encode_message(VOLUME)
    assert data == b"/volume\x00" + b",f\x00\x00" + bytes.fromhex("3f000000")
    assert len(data) == 16
    assert data == oracle_encoder.encode(to_oracle(VOLUME))


def test_encode_mute_example():
    data = encode_message(MUTE)
    assert data == b"/ch/3/mute\x00\x00" + b",i\x00\x00" + bytes.fromhex("00000001")
    assert len(data) == 20


def test_encode_zero_args():
    assert encode_message(OscMessage("/a")) == b"/a\x00\x00,\x00\x00\x00"


def test_decode_volume_example():
    assert decode_message(encode_message(VOLUME)) == VOLUME


def test_decode_truncated_float():
    data = encode_message(VOLUME)[:-4]
    with pytest.raises(Truncated):
        decode_message(data)


def test_decode_trailing_garbage():
    with pytest.raises(TrailingGarbage):
        decode_message(encode_message(VOLUME) + b"\x00\x00\x00\x00")


def test_decode_rejects_tagless_message():
    with pytest.raises(MissingTypeTagString):
        decode_message(b"/a\x00\x00")


def test_decode_rejects_unknown_tag():
    with pytest.raises(UnknownTypeTag):
        decode_message(b"/a\x00\x00,r\x00\x00\x00\x00\x00\x00")


def test_decode_rejects_misaligned_length():
    with pytest.raises(Truncated):
        decode_message(b"/a\x00\x00,\x00\x00")


def test_decode_rejects_bad_utf8():
    with pytest.raises(MalformedPacket):
        decode_message(b"/\xff\x00\x00,\x00\x00\x00")


def test_empty_bundle_immediate():
    data = encode_bundle(OscBundle(IMMEDIATE, ()))
    assert data == b"#bundle\x00" + bytes.fromhex("0000000000000001")


def test_bundle_of_two_examples():
    bundle = OscBundle(IMMEDIATE, (VOLUME, MUTE))
    data = encode_bundle(bundle)
    assert len(data) == 16 + (4 + 16) + (4 + 20) == 60
    assert decode_packet(data).elements == (VOLUME, MUTE)


def test_nested_empty_bundle():
    data = encode_bundle(OscBundle(IMMEDIATE, (OscBundle(IMMEDIATE, ()),)))
    assert len(data) == 36


def _nest(depth):
    bundle = OscBundle(IMMEDIATE, (VOLUME,))
    for _ in range(depth - 1):
        bundle = OscBundle(IMMEDIATE, (bundle,))
    return bundle


def test_nesting_cap():
    data = encode_bundle(_nest(8))
    assert decode_packet(data) == _nest(8)
    with pytest.raises(NestingTooDeep):
        encode_bundle(_nest(9))
    # hand-wrap the depth-8 bytes once more to get a depth-9 packet
    deeper = b"#bundle\x00" + IMMEDIATE.to_bytes() + struct.pack(">I", len(data)) + data
    with pytest.raises(NestingTooDeep):
        decode_packet(deeper)


@pytest.mark.parametrize(
    "data,kind",
    [(encode_bundle(OscBundle()), OscBundle), (encode_message(VOLUME), OscMessage)],
)
def test_decode_packet_discriminator(data, kind):
    assert isinstance(decode_packet(data), kind)


def test_decode_packet_unknown_type():
    with pytest.raises(UnknownPacketType):
        decode_packet(b"\x00abc")


def test_decode_packet_empty():
    with pytest.raises(Truncated):
        decode_packet(b"")


@pytest.mark.parametrize("address", ["volume", "/a b", "/a\tb", "/ch/*/mute", "/a#", "/x,y", "/{a,b}"])
def test_encode_rejects_bad_address(address):
    with pytest.raises(InvalidAddress):
        encode_message(OscMessage(address))


@pytest.mark.parametrize(
    "arg",
    [
        OscArgument("i", 2**31),
        OscArgument("i", 1.5),
        OscArgument("f", "x"),
        OscArgument("f", 1e39),
        OscArgument("s", "a\x00b"),
        OscArgument("b", b"x" * (64 * 1024 + 1)),
        OscArgument("r", 1),
        OscArgument("t", 5),
    ],
)
def test_encode_rejects_bad_argument(arg):
    with pytest.raises(UnencodableArgument):
        encode_message(OscMessage("/a", (arg,)))


def test_int64_and_double_roundtrip():
    msg = OscMessage("/wide", (OscArgument("h", -(2**62)), OscArgument("d", math.pi)))
    assert decode_message(encode_message(msg)) == msg


def test_endianness_of_int32_one():
    assert encode_message(OscMessage("/x", (OscArgument.int32(1),))).endswith(b"\x00\x00\x00\x01")


def test_float_equality_is_bit_exact():
    nan = OscArgument.float32(float("nan"))
    assert nan == OscArgument.float32(float("nan"))
    assert OscArgument.float32(0.0) != OscArgument.float32(-0.0)
    assert OscArgument.float32(0.5) != OscArgument.int32(0)


# ---------------------------------------------------------------- timetags


def test_unix_epoch_timetag():
    assert timetag_from_walltime(0) == OscTimetag(NTP_UNIX_OFFSET, 0)
    assert timetag_from_walltime(datetime(1970, 1, 1, tzinfo=timezone.utc)) == OscTimetag(2208988800, 0)


def test_immediate_has_no_walltime():
    with pytest.raises(ImmediateHasNoWalltime):
        timetag_to_walltime(IMMEDIATE)


@given(st.fractions(min_value=0, max_value=2_000_000_000))
def test_timetag_roundtrip_exact(t):
    tt = timetag_from_walltime(t)
    back = tt.to_unix_fraction()
    assert 0 <= t - back < Fraction(1, 2**32)


@given(st.floats(min_value=0, max_value=2_000_000_000))
def test_timetag_roundtrip_float(t):
    back = timetag_to_walltime(timetag_from_walltime(t))
    assert abs(back - t) <= 2**-32 + math.ulp(t)


def test_timetag_rejects_pre_epoch():
    with pytest.raises(ValueError):
        timetag_from_walltime(-1)


# ---------------------------------------------------------------- properties


@settings(max_examples=300)
@given(packets)
def test_roundtrip_alignment_and_oracle(packet):
    data = encode_packet(packet)
    assert len(data) % 4 == 0
    assert decode_packet(data) == packet
    assert data == oracle_encoder.encode(to_oracle(packet))


@given(messages, st.binary(min_size=1, max_size=8))
def test_exact_consumption(msg, extra):
    data = encode_message(msg) + extra
    with pytest.raises((TrailingGarbage, Truncated)):
        decode_message(data)


@given(messages)
def test_every_prefix_fails(msg):
    data = encode_message(msg)
    for cut in range(4, len(data), 4):
        try:
            decoded = decode_message(data[:cut])
        except (Truncated, MalformedPacket, MissingTypeTagString):
            continue
        # a prefix can only decode if the dropped tail was pure argument data
        assert decoded != msg


@given(arguments)
def test_json_form_roundtrip(arg):
    assert arg_from_json(arg.tag, arg_to_json(arg)) == arg


@given(packets)
def test_packet_json_roundtrip(packet):
    assert packet_from_json(packet_to_json(packet)) == packet


@given(timetags)
def test_timetag_bytes(tt):
    assert struct.unpack(">II", tt.to_bytes()) == (tt.seconds, tt.fraction)
