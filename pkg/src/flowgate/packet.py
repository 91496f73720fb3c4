"""Ethernet II / IPv4 / ICMP / TCP frames: parsing, building, checksums."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from ipaddress import IPv4Address
from typing import Union

ETH_TYPE_IPV4 = 0x0800
PROTO_ICMP = 1
PROTO_TCP = 6
DEFAULT_MTU = 1500

ICMP_ECHO_REPLY = 0
ICMP_ECHO_REQUEST = 8

FIN, SYN, RST, PSH, ACK, URG = 0x01, 0x02, 0x04, 0x08, 0x10, 0x20
# Canonical letter order used when printing a flag byte.
FLAG_LETTERS = (("F", FIN), ("S", SYN), ("R", RST), ("P", PSH), ("A", ACK), ("U", URG))

_ETH = struct.Struct("!6s6sH")
_IPV4 = struct.Struct("!BBHHHBBH4s4s")
_ICMP = struct.Struct("!BBHHH")
_TCP = struct.Struct("!HHIIBBHHH")
_HEX = set("0123456789abcdefABCDEF")


class PacketError(ValueError):
    pass


class Truncated(PacketError):
    pass


class BadVersion(PacketError):
    pass


class Oversize(PacketError):
    pass


class UnknownFlagLetter(PacketError):
    pass


class MalformedMac(PacketError):
    pass


@dataclass(frozen=True, order=True)
class MacAddr:
    """A 48-bit MAC address; ``str()`` gives the lowercase colon form."""

    octets: bytes

    def __post_init__(self):
        if not isinstance(self.octets, bytes) or len(self.octets) != 6:
            raise MalformedMac(f"MAC needs 6 octets, got {self.octets!r}")

    @classmethod
    def parse(cls, text: Union[str, "MacAddr"]) -> "MacAddr":
        if isinstance(text, MacAddr):
            return text
        parts = text.strip().replace("-", ":").split(":")
        if len(parts) != 6 or not all(len(p) == 2 and set(p) <= _HEX for p in parts):
            raise MalformedMac(f"not a MAC address: {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)

    def __repr__(self) -> str:
        return f"MacAddr('{self}')"


BROADCAST = MacAddr(b"\xff" * 6)


def internet_checksum(data: bytes) -> int:
    """Ones-complement of the ones-complement sum of 16-bit words."""
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def tcp_flags_from_letters(letters: str) -> int:
    table = dict(FLAG_LETTERS)
    flags = 0
    for ch in letters:
        bit = table.get(ch.upper())
        if bit is None:
            raise UnknownFlagLetter(f"unknown TCP flag letter {ch!r}")
        flags |= bit
    return flags


def tcp_flags_to_letters(flags: int) -> str:
    if flags & ~0x3F:
        raise UnknownFlagLetter(f"flag bits {flags:#04x} have no letter form")
    return "".join(letter for letter, bit in FLAG_LETTERS if flags & bit)


@dataclass
class IcmpEcho:
    icmp_type: int = ICMP_ECHO_REQUEST
    code: int = 0
    checksum: int = 0
    identifier: int = 0
    sequence: int = 0
    data: bytes = b""

    def to_bytes(self) -> bytes:
        body = _ICMP.pack(self.icmp_type, self.code, 0, self.identifier, self.sequence) + self.data
        csum = internet_checksum(body)
        return body[:2] + struct.pack("!H", csum) + body[4:]

    @classmethod
    def from_bytes(cls, raw: bytes) -> "IcmpEcho":
        if len(raw) < _ICMP.size:
            raise Truncated(f"ICMP message needs {_ICMP.size} bytes, got {len(raw)}")
        t, code, csum, ident, seq = _ICMP.unpack_from(raw)
        return cls(t, code, csum, ident, seq, bytes(raw[_ICMP.size:]))


@dataclass
class TcpSegment:
    src_port: int = 0
    dst_port: int = 0
    seq: int = 0
    ack: int = 0
    data_offset: int = 5
    flags: int = 0
    window: int = 0
    checksum: int = 0
    urgent: int = 0
    payload: bytes = b""

    def to_bytes(self, src: IPv4Address, dst: IPv4Address) -> bytes:
        header = _TCP.pack(
            self.src_port, self.dst_port, self.seq, self.ack,
            5 << 4, self.flags, self.window, 0, self.urgent,
        )
        body = header + self.payload
        pseudo = src.packed + dst.packed + struct.pack("!BBH", 0, PROTO_TCP, len(body))
        csum = internet_checksum(pseudo + body)
        return body[:16] + struct.pack("!H", csum) + body[18:]

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TcpSegment":
        if len(raw) < _TCP.size:
            raise Truncated(f"TCP header needs {_TCP.size} bytes, got {len(raw)}")
        sport, dport, seq, ack, off, flags, win, csum, urg = _TCP.unpack_from(raw)
        data_offset = off >> 4
        if data_offset < 5 or data_offset * 4 > len(raw):
            raise Truncated(f"TCP data offset {data_offset} exceeds segment")
        return cls(sport, dport, seq, ack, data_offset, flags, win, csum, urg,
                   bytes(raw[data_offset * 4:]))


IpPayload = Union[IcmpEcho, TcpSegment, bytes]


@dataclass
class Ipv4Packet:
    src: IPv4Address
    dst: IPv4Address
    proto: int
    payload: IpPayload = b""
    tos: int = 0
    identification: int = 0
    flags: int = 0
    offset: int = 0
    ttl: int = 64
    version: int = 4
    header_length: int = 5
    total_length: int = 0
    header_checksum: int = 0

    def payload_bytes(self) -> bytes:
        if isinstance(self.payload, TcpSegment):
            return self.payload.to_bytes(self.src, self.dst)
        if isinstance(self.payload, IcmpEcho):
            return self.payload.to_bytes()
        return bytes(self.payload)

    def to_bytes(self) -> bytes:
        body = self.payload_bytes()
        total = 20 + len(body)
        header = _IPV4.pack(
            (4 << 4) | 5, self.tos, total, self.identification,
            (self.flags << 13) | self.offset, self.ttl, self.proto, 0,
            self.src.packed, self.dst.packed,
        )
        csum = internet_checksum(header)
        return header[:10] + struct.pack("!H", csum) + header[12:] + body

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Ipv4Packet":
        if len(raw) < _IPV4.size:
            raise Truncated(f"IPv4 header needs 20 bytes, got {len(raw)}")
        (vihl, tos, total, ident, frag, ttl, proto, csum, src, dst) = _IPV4.unpack_from(raw)
        version, ihl = vihl >> 4, vihl & 0x0F
        if version != 4:
            raise BadVersion(f"IP version {version}")
        if ihl < 5 or total < ihl * 4:
            raise Truncated(f"bad IPv4 lengths ihl={ihl} total_length={total}")
        if total > len(raw):
            raise Truncated(f"IPv4 total_length {total} but only {len(raw)} bytes")
        body = bytes(raw[ihl * 4:total])
        payload: IpPayload = body
        if proto == PROTO_ICMP:
            payload = IcmpEcho.from_bytes(body)
        elif proto == PROTO_TCP:
            payload = TcpSegment.from_bytes(body)
        return cls(
            src=IPv4Address(src), dst=IPv4Address(dst), proto=proto, payload=payload,
            tos=tos, identification=ident, flags=frag >> 13, offset=frag & 0x1FFF,
            ttl=ttl, version=version, header_length=ihl, total_length=total,
            header_checksum=csum,
        )


@dataclass
class EthernetFrame:
    dst: MacAddr
    src: MacAddr
    ethertype: int = ETH_TYPE_IPV4
    payload: Union[Ipv4Packet, bytes] = field(default=b"")

    @property
    def ip(self) -> Ipv4Packet | None:
        return self.payload if isinstance(self.payload, Ipv4Packet) else None

    @property
    def tcp(self) -> TcpSegment | None:
        ip = self.ip
        return ip.payload if ip is not None and isinstance(ip.payload, TcpSegment) else None

    @property
    def icmp(self) -> IcmpEcho | None:
        ip = self.ip
        return ip.payload if ip is not None and isinstance(ip.payload, IcmpEcho) else None


def parse_frame(raw: bytes) -> EthernetFrame:
    if len(raw) < _ETH.size:
        raise Truncated(f"Ethernet frame needs 14 bytes, got {len(raw)}")
    dst, src, ethertype = _ETH.unpack_from(raw)
    body = bytes(raw[_ETH.size:])
    payload: Union[Ipv4Packet, bytes] = body
    if ethertype == ETH_TYPE_IPV4:
        payload = Ipv4Packet.from_bytes(body)
    return EthernetFrame(MacAddr(dst), MacAddr(src), ethertype, payload)


def build_frame(frame: EthernetFrame, mtu: int = DEFAULT_MTU) -> bytes:
    """Serialize ``frame``; every length and checksum field is recomputed."""
    if isinstance(frame.payload, Ipv4Packet):
        body = frame.payload.to_bytes()
    else:
        body = bytes(frame.payload)
    if len(body) > mtu:
        raise Oversize(f"payload of {len(body)} bytes exceeds MTU {mtu}")
    return _ETH.pack(frame.dst.octets, frame.src.octets, frame.ethertype) + body


def finalize(frame: EthernetFrame, mtu: int = DEFAULT_MTU) -> EthernetFrame:
    """Return a copy of ``frame`` with computed lengths and checksums filled in."""
    return parse_frame(build_frame(frame, mtu))


def verify_ipv4_header(header: bytes) -> bool:
    return len(header) >= 20 and internet_checksum(bytes(header[:20])) == 0


def verify_frame(raw: bytes) -> bool:
    """True when every checksum carried by ``raw`` verifies."""
    frame = parse_frame(raw)
    ip = frame.ip
    if ip is None:
        return True
    ip_raw = raw[14:14 + ip.total_length]
    if not verify_ipv4_header(ip_raw[:20]):
        return False
    body = ip_raw[20:]
    if ip.proto == PROTO_ICMP:
        return internet_checksum(body) == 0
    if ip.proto == PROTO_TCP:
        pseudo = ip.src.packed + ip.dst.packed + struct.pack("!BBH", 0, PROTO_TCP, len(body))
        return internet_checksum(pseudo + body) == 0
    return True


def tcp_frame(src_mac, dst_mac, src_ip, dst_ip, src_port: int, dst_port: int,
              flags: int, **ip_fields) -> EthernetFrame:
    """Convenience constructor for a finalized TCP-over-IPv4 frame.

    IPv4 header fields go in ``ip_fields`` (``ip_flags`` for the fragment
    flags); ``seq``, ``ack`` and ``window`` are routed to the segment.
    """
    if "ip_flags" in ip_fields:
        ip_fields["flags"] = ip_fields.pop("ip_flags")
    seg_fields = {k: ip_fields.pop(k) for k in ("seq", "ack", "window") if k in ip_fields}
    seg = TcpSegment(src_port=src_port, dst_port=dst_port, flags=flags, **seg_fields)
    ip = Ipv4Packet(IPv4Address(src_ip), IPv4Address(dst_ip), PROTO_TCP, seg, **ip_fields)
    return finalize(EthernetFrame(MacAddr.parse(dst_mac), MacAddr.parse(src_mac), ETH_TYPE_IPV4, ip))


def icmp_echo_frame(src_mac, dst_mac, src_ip, dst_ip, identifier: int, sequence: int,
                    data: bytes = b"", **ip_fields) -> EthernetFrame:
    if "ip_flags" in ip_fields:
        ip_fields["flags"] = ip_fields.pop("ip_flags")
    echo = IcmpEcho(ICMP_ECHO_REQUEST, 0, 0, identifier, sequence, data)
    ip = Ipv4Packet(IPv4Address(src_ip), IPv4Address(dst_ip), PROTO_ICMP, echo, **ip_fields)
    return finalize(EthernetFrame(MacAddr.parse(dst_mac), MacAddr.parse(src_mac), ETH_TYPE_IPV4, ip))


__all__ = [
    "BROADCAST", "BadVersion", "EthernetFrame", "IcmpEcho", "Ipv4Packet", "MacAddr",
    "MalformedMac", "Oversize", "PacketError", "TcpSegment", "Truncated",
    "UnknownFlagLetter", "build_frame", "finalize", "icmp_echo_frame", "internet_checksum",
    "parse_frame", "tcp_flags_from_letters", "tcp_flags_to_letters", "tcp_frame",
    "verify_frame", "verify_ipv4_header",
]
