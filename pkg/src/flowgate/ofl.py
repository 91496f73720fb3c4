"""OFL: a compact OpenFlow-1.3-flavoured wire format for controller/switch messages.

Header (8 bytes, big-endian): version u8 (=0x04), type u8, length u16, xid u32.
Match fields and actions are TLVs: type u16, value length u16, value.
"""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field, fields
from enum import IntEnum
from typing import Iterator, Optional, Union

from .packet import MacAddr

OFL_VERSION = 0x04

PORT_FLOOD = 0xFFFFFFFB
PORT_CONTROLLER = 0xFFFFFFFD
PORT_ANY = 0xFFFFFFFF

_HEADER = struct.Struct("!BBHI")
_FLOW_MOD = struct.Struct("!QBH5xH")
_PACKET_IN = struct.Struct("!IB3x")
_PACKET_OUT = struct.Struct("!IH2x")
_TLV = struct.Struct("!HH")

MATCH_IN_PORT, MATCH_ETH_SRC, MATCH_ETH_DST = 1, 2, 3
ACTION_OUTPUT = 1


class MsgType(IntEnum):
    HELLO = 0
    ECHO_REQUEST = 2
    ECHO_REPLY = 3
    PACKET_IN = 10
    PACKET_OUT = 13
    FLOW_MOD = 14


class FlowModCommand(IntEnum):
    ADD = 0
    MODIFY = 1
    DELETE = 3


class OflError(ValueError):
    pass


class BadMagicVersion(OflError):
    pass


class LengthMismatch(OflError):
    pass


class UnknownType(OflError):
    pass


class TruncatedBody(OflError):
    pass


class DuplicateMatchField(OflError):
    pass


@dataclass(frozen=True)
class Output:
    port: int

    def __str__(self):
        return "output:flood" if self.port == PORT_FLOOD else f"output:{self.port}"


@dataclass(frozen=True)
class Match:
    """Exact-match filter; a field left as ``None`` is wildcarded."""

    in_port: Optional[int] = None
    eth_src: Optional[MacAddr] = None
    eth_dst: Optional[MacAddr] = None

    def __post_init__(self):
        for name in ("eth_src", "eth_dst"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, MacAddr):
                object.__setattr__(self, name, MacAddr.parse(value))

    def items(self) -> list[tuple[str, object]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)
                if getattr(self, f.name) is not None]

    def is_empty(self) -> bool:
        return not self.items()

    def involves(self, mac: MacAddr) -> bool:
        return mac in (self.eth_src, self.eth_dst)

    def covers(self, other: "Match") -> bool:
        """Non-strict selection: every field set here is set to the same value in ``other``."""
        return all(getattr(other, name) == value for name, value in self.items())

    def matches_packet(self, in_port: int, eth_src: MacAddr, eth_dst: MacAddr) -> bool:
        return ((self.in_port is None or self.in_port == in_port)
                and (self.eth_src is None or self.eth_src == eth_src)
                and (self.eth_dst is None or self.eth_dst == eth_dst))

    def __str__(self):
        return ",".join(f"{k}={v}" for k, v in self.items())


@dataclass
class Hello:
    xid: int = 0


@dataclass
class EchoRequest:
    xid: int = 0
    data: bytes = b""


@dataclass
class EchoReply:
    xid: int = 0
    data: bytes = b""


@dataclass
class PacketIn:
    in_port: int
    frame: bytes
    reason: int = 0  # 0 = no matching flow entry
    xid: int = 0


@dataclass
class PacketOut:
    in_port: int
    actions: tuple[Output, ...] = ()
    frame: bytes = b""
    xid: int = 0

    def __post_init__(self):
        self.actions = tuple(self.actions)


@dataclass
class FlowMod:
    command: FlowModCommand
    match: Match = field(default_factory=Match)
    priority: int = 0
    actions: tuple[Output, ...] = ()
    cookie: int = 0
    xid: int = 0

    def __post_init__(self):
        self.command = FlowModCommand(self.command)
        self.actions = tuple(self.actions)
        if self.command is FlowModCommand.ADD and self.match.is_empty():
            raise ValueError("FlowMod ADD requires a non-empty match")


Message = Union[Hello, EchoRequest, EchoReply, PacketIn, PacketOut, FlowMod]

_TYPE_OF = {
    Hello: MsgType.HELLO,
    EchoRequest: MsgType.ECHO_REQUEST,
    EchoReply: MsgType.ECHO_REPLY,
    PacketIn: MsgType.PACKET_IN,
    PacketOut: MsgType.PACKET_OUT,
    FlowMod: MsgType.FLOW_MOD,
}


def _encode_match(match: Match) -> bytes:
    out = bytearray()
    if match.in_port is not None:
        out += _TLV.pack(MATCH_IN_PORT, 4) + struct.pack("!I", match.in_port)
    if match.eth_src is not None:
        out += _TLV.pack(MATCH_ETH_SRC, 6) + match.eth_src.octets
    if match.eth_dst is not None:
        out += _TLV.pack(MATCH_ETH_DST, 6) + match.eth_dst.octets
    return bytes(out)


def _encode_actions(actions) -> bytes:
    return b"".join(_TLV.pack(ACTION_OUTPUT, 4) + struct.pack("!I", a.port) for a in actions)


def encode(msg: Message) -> bytes:
    if isinstance(msg, (EchoRequest, EchoReply)):
        body = msg.data
    elif isinstance(msg, Hello):
        body = b""
    elif isinstance(msg, PacketIn):
        body = _PACKET_IN.pack(msg.in_port, msg.reason) + msg.frame
    elif isinstance(msg, PacketOut):
        acts = _encode_actions(msg.actions)
        body = _PACKET_OUT.pack(msg.in_port, len(acts)) + acts + msg.frame
    elif isinstance(msg, FlowMod):
        m = _encode_match(msg.match)
        body = (_FLOW_MOD.pack(msg.cookie, msg.command, msg.priority, len(m))
                + m + _encode_actions(msg.actions))
    else:
        raise TypeError(f"not an OFL message: {msg!r}")
    return _HEADER.pack(OFL_VERSION, _TYPE_OF[type(msg)], _HEADER.size + len(body), msg.xid) + body


def _iter_tlvs(data: bytes, what: str) -> Iterator[tuple[int, bytes]]:
    pos = 0
    while pos < len(data):
        if len(data) - pos < _TLV.size:
            raise LengthMismatch(f"{what}: dangling {len(data) - pos} bytes")
        kind, length = _TLV.unpack_from(data, pos)
        pos += _TLV.size
        if pos + length > len(data):
            raise LengthMismatch(f"{what}: TLV type {kind} overruns section")
        yield kind, data[pos:pos + length]
        pos += length


_MATCH_FIELDS = {MATCH_IN_PORT: ("in_port", 4), MATCH_ETH_SRC: ("eth_src", 6), MATCH_ETH_DST: ("eth_dst", 6)}


def _decode_match(data: bytes) -> Match:
    values: dict[str, object] = {}
    for kind, value in _iter_tlvs(data, "match"):
        if kind not in _MATCH_FIELDS:
            raise UnknownType(f"unknown match field id {kind}")
        name, size = _MATCH_FIELDS[kind]
        if len(value) != size:
            raise LengthMismatch(f"match field {name} has {len(value)} bytes, want {size}")
        if name in values:
            raise DuplicateMatchField(f"match field {name} appears twice")
        values[name] = struct.unpack("!I", value)[0] if name == "in_port" else MacAddr(bytes(value))
    return Match(**values)


def _decode_actions(data: bytes) -> tuple[Output, ...]:
    actions = []
    for kind, value in _iter_tlvs(data, "actions"):
        if kind != ACTION_OUTPUT:
            raise UnknownType(f"unknown action type {kind}")
        if len(value) != 4:
            raise LengthMismatch(f"output action has {len(value)} bytes, want 4")
        actions.append(Output(struct.unpack("!I", value)[0]))
    return tuple(actions)


def _check_header(data: bytes) -> tuple[int, int, int]:
    version, kind, length, xid = _HEADER.unpack_from(data)
    if version != OFL_VERSION:
        raise BadMagicVersion(f"version byte {version:#04x}, expected {OFL_VERSION:#04x}")
    if length < _HEADER.size:
        raise LengthMismatch(f"declared length {length} shorter than header")
    return kind, length, xid


def decode(data: bytes) -> Message:
    """Decode exactly one message occupying all of ``data``."""
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise TruncatedBody(f"need {_HEADER.size} header bytes, got {len(data)}")
    kind, length, xid = _check_header(data)
    if length > len(data):
        raise TruncatedBody(f"declared length {length} but {len(data)} bytes present")
    if length < len(data):
        raise LengthMismatch(f"declared length {length} but {len(data)} bytes given")
    body = data[_HEADER.size:]
    try:
        kind = MsgType(kind)
    except ValueError:
        raise UnknownType(f"unknown message type {kind}") from None

    if kind is MsgType.HELLO:
        return Hello(xid)
    if kind is MsgType.ECHO_REQUEST:
        return EchoRequest(xid, body)
    if kind is MsgType.ECHO_REPLY:
        return EchoReply(xid, body)
    if kind is MsgType.PACKET_IN:
        if len(body) < _PACKET_IN.size:
            raise TruncatedBody("PacketIn body too short")
        in_port, reason = _PACKET_IN.unpack_from(body)
        return PacketIn(in_port, body[_PACKET_IN.size:], reason, xid)
    if kind is MsgType.PACKET_OUT:
        if len(body) < _PACKET_OUT.size:
            raise TruncatedBody("PacketOut body too short")
        in_port, actions_len = _PACKET_OUT.unpack_from(body)
        start = _PACKET_OUT.size
        if start + actions_len > len(body):
            raise LengthMismatch("PacketOut actions_len overruns body")
        actions = _decode_actions(body[start:start + actions_len])
        return PacketOut(in_port, actions, body[start + actions_len:], xid)
    # FLOW_MOD
    if len(body) < _FLOW_MOD.size:
        raise TruncatedBody("FlowMod body too short")
    cookie, command, priority, match_len = _FLOW_MOD.unpack_from(body)
    start = _FLOW_MOD.size
    if start + match_len > len(body):
        raise LengthMismatch("FlowMod match_len overruns body")
    try:
        command = FlowModCommand(command)
    except ValueError:
        raise UnknownType(f"unknown FlowMod command {command}") from None
    match = _decode_match(body[start:start + match_len])
    actions = _decode_actions(body[start + match_len:])
    try:
        return FlowMod(command, match, priority, actions, cookie, xid)
    except ValueError as exc:
        raise LengthMismatch(str(exc)) from None


class MessageStream:
    """Reassembles OFL messages from an arbitrarily chunked byte stream.

    A decode error leaves the buffer positioned at the start of the failed
    message; call :meth:`skip` to drop it and resynchronize.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf += data

    @property
    def pending(self) -> int:
        return len(self._buf)

    def next(self) -> Optional[Message]:
        if len(self._buf) < _HEADER.size:
            return None
        _, length, _ = _check_header(self._buf)
        if len(self._buf) < length:
            return None
        msg = decode(self._buf[:length])
        del self._buf[:length]
        return msg

    def skip(self) -> int:
        """Discard the message at the head of the buffer; returns bytes dropped."""
        if not self._buf:
            return 0
        n = 1
        if len(self._buf) >= _HEADER.size and self._buf[0] == OFL_VERSION:
            length = _HEADER.unpack_from(self._buf)[2]
            if _HEADER.size <= length <= len(self._buf):
                n = length
        del self._buf[:n]
        return n

    def __iter__(self) -> Iterator[Message]:
        while (msg := self.next()) is not None:
            yield msg


class XidCounter:
    """Per-connection transaction ids, starting at 1."""

    def __init__(self):
        self._next = itertools.count(1)

    def __call__(self) -> int:
        return next(self._next) & 0xFFFFFFFF

    def stamp(self, msg: Message) -> Message:
        msg.xid = self()
        return msg
