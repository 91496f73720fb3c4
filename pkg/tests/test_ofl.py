import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowgate import ofl
from flowgate.ofl import (BadMagicVersion, DuplicateMatchField, FlowMod, FlowModCommand, Hello,
                          LengthMismatch, Match, MessageStream, Output, PacketIn, PacketOut,
                          TruncatedBody, UnknownType, XidCounter, decode, encode)

from .conftest import ATTACKER, ofl_messages


def test_hello_bytes():
    assert encode(Hello(xid=1)) == bytes([0x04, 0x00, 0x00, 0x08, 0, 0, 0, 1])


def _match_tlvs(raw: bytes):
    (match_len,) = struct.unpack_from("!H", raw, 8 + 16)
    section = raw[8 + 18:8 + 18 + match_len]
    out, pos = [], 0
    while pos < len(section):
        kind, length = struct.unpack_from("!HH", section, pos)
        out.append((kind, section[pos + 4:pos + 4 + length]))
        pos += 4 + length
    return out


def test_delete_by_source_carries_one_eth_src_tlv():
    raw = encode(FlowMod(FlowModCommand.DELETE, Match(eth_src=ATTACKER)))
    assert _match_tlvs(raw) == [(ofl.MATCH_ETH_SRC, ATTACKER.octets)]


def test_truncated_body():
    raw = struct.pack("!BBHI", 4, 0, 12, 1)
    with pytest.raises(TruncatedBody):
        decode(raw)


def test_bad_version():
    with pytest.raises(BadMagicVersion):
        decode(bytes([0x01, 0, 0, 8, 0, 0, 0, 1]))


def test_duplicate_match_field():
    tlv = struct.pack("!HH", ofl.MATCH_ETH_SRC, 6) + ATTACKER.octets
    match = tlv + tlv
    body = struct.pack("!QBH5xH", 0, FlowModCommand.DELETE, 0, len(match)) + match
    raw = struct.pack("!BBHI", 4, ofl.MsgType.FLOW_MOD, 8 + len(body), 5) + body
    with pytest.raises(DuplicateMatchField):
        decode(raw)


def test_unknown_type_and_trailing_bytes():
    with pytest.raises(UnknownType):
        decode(bytes([4, 99, 0, 8, 0, 0, 0, 1]))
    with pytest.raises(LengthMismatch):
        decode(encode(Hello(1)) + b"\x00")


def test_add_requires_match():
    with pytest.raises(ValueError):
        FlowMod(FlowModCommand.ADD, Match(), 10, (Output(2),))


@settings(max_examples=1000)
@given(ofl_messages)
def test_round_trip(msg):
    assert decode(encode(msg)) == msg


@settings(max_examples=200)
@given(st.lists(ofl_messages, max_size=8), st.data())
def test_stream_rechunking(msgs, data):
    blob = b"".join(encode(m) for m in msgs)
    cuts = sorted(data.draw(st.lists(st.integers(0, len(blob)), max_size=10)))
    stream, got, prev = MessageStream(), [], 0
    for cut in cuts + [len(blob)]:
        stream.feed(blob[prev:cut])
        got.extend(stream)
        prev = cut
    assert got == msgs
    assert stream.pending == 0


def test_stream_resynchronizes_after_bad_message():
    bad = bytes([4, 99, 0, 8, 0, 0, 0, 1])
    stream = MessageStream()
    stream.feed(bad + encode(Hello(2)))
    with pytest.raises(UnknownType):
        stream.next()
    assert stream.pending == 16  # buffer untouched by the failure
    assert stream.skip() == 8
    assert stream.next() == Hello(2)


def test_packet_in_and_out_fields():
    frame = bytes(range(60))
    assert decode(encode(PacketIn(1, frame, 0, 9))) == PacketIn(1, frame, 0, 9)
    out = PacketOut(2, (Output(ofl.PORT_FLOOD),), frame, 3)
    assert decode(encode(out)) == out
    assert str(Output(ofl.PORT_FLOOD)) == "output:flood"


def test_xid_counter():
    xids = XidCounter()
    assert [xids(), xids()] == [1, 2]
    msg = xids.stamp(Hello())
    assert msg.xid == 3


def test_match_covers_is_subset_test():
    wide = Match(eth_src=ATTACKER)
    narrow = Match(in_port=1, eth_src=ATTACKER, eth_dst="08:00:27:32:e9:4d")
    assert wide.covers(narrow) and not narrow.covers(wide)
    assert Match().covers(narrow)
