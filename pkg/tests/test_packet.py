from ipaddress import IPv4Address

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowgate.packet import (ACK, FIN, PSH, SYN, URG, BadVersion, EthernetFrame, IcmpEcho,
                             Ipv4Packet, MacAddr, MalformedMac, Oversize, TcpSegment, Truncated,
                             UnknownFlagLetter, build_frame, icmp_echo_frame, internet_checksum,
                             parse_frame, tcp_flags_from_letters, tcp_flags_to_letters, tcp_frame,
                             verify_frame, verify_ipv4_header)

from .conftest import ATTACKER, VICTIM, frames


def brute_checksum(data: bytes) -> int:
    """Ones-complement sum, one byte at a time with explicit end-around carry."""
    total = 0
    for i, byte in enumerate(data):
        total += byte << 8 if i % 2 == 0 else byte
        while total > 0xFFFF:
            total = (total & 0xFFFF) + 1
    return (~total) & 0xFFFF


# Header fields and checksums observed in the captured alerts.
CAPTURED_HEADERS = [
    # src, proto, tos, identification, flags, ttl, checksum
    ("172.16.10.100", 1, 0, 2406, 2, 64, 50364),
    ("172.16.10.100", 6, 0, 3115, 0, 49, 4383),
    ("110.69.225.90", 6, 64, 6732, 2, 255, 23441),
]


@pytest.mark.parametrize("src,proto,tos,ident,flags,ttl,csum", CAPTURED_HEADERS)
def test_ipv4_checksum_matches_captured_headers(src, proto, tos, ident, flags, ttl, csum):
    payload = IcmpEcho(8, 0, 0, 3920, 6, bytes(56)) if proto == 1 else TcpSegment(1, 2)
    ip = Ipv4Packet(IPv4Address(src), IPv4Address("172.16.10.2"), proto, payload,
                    tos=tos, identification=ident, flags=flags, ttl=ttl)
    parsed = Ipv4Packet.from_bytes(ip.to_bytes())
    assert parsed.header_checksum == csum
    assert parsed.total_length == (84 if proto == 1 else 40)


def test_icmp_checksum_matches_captured_echo():
    data = bytes([244, 25, 5, 88, 0, 0, 0, 0, 1, 9, 3, 0, 0, 0, 0, 0]) + bytes(range(16, 56))
    echo = IcmpEcho(8, 0, 0, 3920, 6, data)
    assert IcmpEcho.from_bytes(echo.to_bytes()).checksum == 11356


def test_parse_icmp_echo_request():
    frame = icmp_echo_frame(ATTACKER, VICTIM, "172.16.10.100", "172.16.10.2", 3920, 1,
                            bytes(56), ttl=64, ip_flags=2)
    parsed = parse_frame(build_frame(frame))
    assert parsed.src == ATTACKER and parsed.dst == VICTIM
    assert parsed.ip.proto == 1 and parsed.ip.ttl == 64 and parsed.ip.total_length == 84
    assert parsed.icmp.identifier == 3920
    assert len(build_frame(frame)) == 98


def test_minimal_opaque_frame():
    frame = parse_frame(bytes(14))
    assert frame.ethertype == 0 and frame.payload == b"" and frame.ip is None


def test_thirteen_bytes_is_truncated():
    with pytest.raises(Truncated):
        parse_frame(bytes(13))


def test_xmas_probe_is_54_bytes_and_reparses():
    frame = tcp_frame(ATTACKER, VICTIM, "172.16.10.100", "172.16.10.2", 40000, 80,
                      FIN | PSH | URG, ttl=49)
    raw = build_frame(frame)
    assert len(raw) == 54
    again = parse_frame(raw)
    assert again == frame
    assert again.tcp.flags == 0x29 and again.ip.total_length == 40 and again.ip.ttl == 49


def test_ipv4_version_other_than_4_rejected():
    raw = bytearray(build_frame(tcp_frame(ATTACKER, VICTIM, "1.1.1.1", "2.2.2.2", 1, 2, SYN)))
    raw[14] = (6 << 4) | 5
    with pytest.raises(BadVersion):
        parse_frame(bytes(raw))


def test_total_length_beyond_buffer_is_truncated():
    raw = build_frame(tcp_frame(ATTACKER, VICTIM, "1.1.1.1", "2.2.2.2", 1, 2, SYN))
    with pytest.raises(Truncated):
        parse_frame(raw[:-1])


def test_oversize_payload_rejected():
    frame = EthernetFrame(ATTACKER, VICTIM, 0x88B5, bytes(1501))
    with pytest.raises(Oversize):
        build_frame(frame)
    assert len(build_frame(frame, mtu=2000)) == 1515


def test_build_recomputes_stale_fields():
    frame = tcp_frame(ATTACKER, VICTIM, "1.1.1.1", "2.2.2.2", 1, 2, SYN)
    frame.ip.total_length = 999
    frame.ip.header_checksum = 1
    frame.tcp.checksum = 7
    raw = build_frame(frame)
    assert verify_frame(raw)
    assert parse_frame(raw).ip.total_length == 40


@given(st.binary(max_size=64))
def test_checksum_agrees_with_bytewise_oracle(data):
    assert internet_checksum(data) == brute_checksum(data)


def test_zero_header_checksum_oracle():
    header = bytearray(20)
    header[0] = 0x45
    header[2:4] = (20).to_bytes(2, "big")
    csum = brute_checksum(bytes(header))
    raw = Ipv4Packet(IPv4Address(0), IPv4Address(0), 0, b"", ttl=0).to_bytes()
    assert int.from_bytes(raw[10:12], "big") == csum
    assert verify_ipv4_header(raw)


@settings(max_examples=1000)
@given(frames())
def test_frame_round_trip(frame):
    raw = build_frame(frame)
    assert parse_frame(raw) == frame
    assert build_frame(parse_frame(raw)) == raw
    assert verify_frame(raw)


@pytest.mark.parametrize("letters,value", [("FPU", 0x29), ("S", 0x02), ("", 0), ("FSRPAU", 0x3F)])
def test_flag_letters(letters, value):
    assert tcp_flags_from_letters(letters) == value


def test_unknown_flag_letter():
    with pytest.raises(UnknownFlagLetter):
        tcp_flags_from_letters("X")


@given(st.integers(0, 0x3F))
def test_flag_letters_round_trip(flags):
    assert tcp_flags_from_letters(tcp_flags_to_letters(flags)) == flags


def test_flag_bits():
    assert (FIN, SYN, PSH, ACK, URG) == (0x01, 0x02, 0x08, 0x10, 0x20)


@pytest.mark.parametrize("text", ["08:00:27:A2:B7:BD", "08-00-27-a2-b7-bd", " 08:00:27:a2:b7:bd "])
def test_mac_parse_normalizes(text):
    assert str(MacAddr.parse(text)) == "08:00:27:a2:b7:bd"


@pytest.mark.parametrize("text", ["not-a-mac", "08:00:27:a2:b7", "08:00:27:a2:b7:bdd",
                                  "+1:00:27:a2:b7:bd", "0g:00:27:a2:b7:bd"])
def test_mac_parse_rejects(text):
    with pytest.raises(MalformedMac):
        MacAddr.parse(text)
