"""Signature and rate-threshold intrusion detector fed from the mirror tap.

Rule grammar, one rule per line (``#`` starts a comment)::

    alert <proto> <addr> <port> -> <addr> <port> (<option>; ...)

``proto`` is icmp, tcp, udp or ip; ``addr`` is ``any``, an address or a
CIDR prefix; ``port`` is ``any`` or a number. Options: ``msg:"text"``,
``itype:<n>``, ``flags:<letters>``, ``detection_filter: track by_src|by_dst,
count <n>, seconds <n>`` and ``sid:<n>``. ``msg`` and ``sid`` are required.
"""
from __future__ import annotations

import logging
import re
import struct
from dataclasses import dataclass, field
from importlib import resources
from ipaddress import IPv4Network
from typing import Callable, Iterable, NamedTuple, Optional, Union

from .alerts import AlertEvent
from .packet import (EthernetFrame, PacketError, parse_frame,
                     tcp_flags_from_letters, tcp_flags_to_letters, UnknownFlagLetter)

log = logging.getLogger(__name__)

PROTO_UDP = 17
PROTOCOLS = ("icmp", "tcp", "udp", "ip")
TICKS_PER_SECOND = 1_000_000
_NUMBER = re.compile(r"[0-9]+")


class RuleError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(message)
        self.line = line


class RuleSyntaxError(RuleError):
    def __init__(self, line: int, column: int, expected: str, found: str = ""):
        where = f"found {found!r}" if found else "found end of line"
        super().__init__(f"line {line}, column {column}: expected {expected}, {where}", line)
        self.column = column
        self.expected = expected


class DuplicateSid(RuleError):
    pass


@dataclass(frozen=True)
class DetectionFilter:
    track: str  # "by_src" | "by_dst"
    count: int
    seconds: int


@dataclass(frozen=True)
class Rule:
    proto: str
    msg: str
    sid: int
    src_net: Optional[IPv4Network] = None
    src_port: Optional[int] = None
    dst_net: Optional[IPv4Network] = None
    dst_port: Optional[int] = None
    itype: Optional[int] = None
    flags: Optional[int] = None
    detection_filter: Optional[DetectionFilter] = None
    action: str = "alert"
    line: int = field(default=0, compare=False)

    def matches(self, frame: EthernetFrame) -> bool:
        ip = frame.ip
        if ip is None:
            return False
        ports: Optional[tuple[int, int]] = None
        if self.proto == "icmp":
            if frame.icmp is None:
                return False
        elif self.proto == "tcp":
            if frame.tcp is None:
                return False
            ports = frame.tcp.src_port, frame.tcp.dst_port
        elif self.proto == "udp":
            if ip.proto != PROTO_UDP or len(ip.payload) < 4:
                return False
            ports = struct.unpack_from("!HH", ip.payload)
        if self.src_net is not None and ip.src not in self.src_net:
            return False
        if self.dst_net is not None and ip.dst not in self.dst_net:
            return False
        for spec, idx in ((self.src_port, 0), (self.dst_port, 1)):
            if spec is not None and (ports is None or ports[idx] != spec):
                return False
        if self.itype is not None and frame.icmp.icmp_type != self.itype:
            return False
        if self.flags is not None and frame.tcp.flags != self.flags:
            return False
        return True


# --- printing ---------------------------------------------------------------

def _fmt_addr(net: Optional[IPv4Network]) -> str:
    if net is None:
        return "any"
    return str(net.network_address) if net.prefixlen == 32 else str(net)


def _fmt_port(port: Optional[int]) -> str:
    return "any" if port is None else str(port)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_rule(rule: Rule) -> str:
    opts = [f"msg:{_quote(rule.msg)}"]
    if rule.itype is not None:
        opts.append(f"itype:{rule.itype}")
    if rule.flags is not None:
        opts.append(f"flags:{tcp_flags_to_letters(rule.flags)}")
    if rule.detection_filter is not None:
        df = rule.detection_filter
        opts.append(f"detection_filter: track {df.track}, count {df.count}, seconds {df.seconds}")
    opts.append(f"sid:{rule.sid}")
    return (f"{rule.action} {rule.proto} {_fmt_addr(rule.src_net)} {_fmt_port(rule.src_port)} -> "
            f"{_fmt_addr(rule.dst_net)} {_fmt_port(rule.dst_port)} ({'; '.join(opts)};)")


# --- parsing ----------------------------------------------------------------

class _Cursor:
    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.pos = 0

    def error(self, expected: str, at: Optional[int] = None) -> RuleSyntaxError:
        pos = self.pos if at is None else at
        found = self.text[pos:pos + 12]
        return RuleSyntaxError(self.line, pos + 1, expected, found)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos:self.pos + 1]

    def word(self, expected: str, stop: str = "") -> tuple[str, int]:
        self.skip_ws()
        start = self.pos
        while (self.pos < len(self.text) and not self.text[self.pos].isspace()
               and self.text[self.pos] not in "();:,\"" + stop):
            self.pos += 1
        if self.pos == start:
            raise self.error(expected)
        return self.text[start:self.pos], start

    def expect(self, literal: str) -> None:
        self.skip_ws()
        if not self.text.startswith(literal, self.pos):
            raise self.error(repr(literal))
        self.pos += len(literal)

    def integer(self, expected: str, lo: int = 0, hi: Optional[int] = None) -> int:
        text, start = self.word(expected)
        if not _NUMBER.fullmatch(text) or (hi is not None and int(text) > hi) or int(text) < lo:
            raise self.error(expected, start)
        return int(text)

    def quoted(self) -> str:
        self.skip_ws()
        if self.peek() != '"':
            raise self.error("quoted string")
        self.pos += 1
        out = []
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\" and self.pos + 1 < len(self.text):
                out.append(self.text[self.pos + 1])
                self.pos += 2
                continue
            if ch == '"':
                self.pos += 1
                return "".join(out)
            out.append(ch)
            self.pos += 1
        raise self.error('closing \'"\'')


def _parse_addr(cur: _Cursor) -> Optional[IPv4Network]:
    text, start = cur.word("address or 'any'")
    if text == "any":
        return None
    try:
        return IPv4Network(text, strict=False)
    except ValueError:
        raise cur.error("IPv4 address or prefix", start) from None


def _parse_port(cur: _Cursor) -> Optional[int]:
    text, start = cur.word("port or 'any'")
    if text == "any":
        return None
    if not _NUMBER.fullmatch(text) or int(text) > 65535:
        raise cur.error("port number or 'any'", start)
    return int(text)


def _strip_comment(line: str) -> str:
    # '#' outside a quoted msg starts a comment
    quoted = escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif ch == "\\" and quoted:
            escaped = True
        elif ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def parse_rule(text: str, line: int = 1) -> Rule:
    cur = _Cursor(_strip_comment(text), line)
    action, start = cur.word("'alert'")
    if action != "alert":
        raise cur.error("'alert'", start)
    proto, start = cur.word("protocol")
    if proto not in PROTOCOLS:
        raise cur.error("one of " + ", ".join(PROTOCOLS), start)
    src_net = _parse_addr(cur)
    src_port = _parse_port(cur)
    cur.expect("->")
    dst_net = _parse_addr(cur)
    dst_port = _parse_port(cur)
    cur.expect("(")

    opts: dict[str, object] = {}
    while True:
        if cur.peek() == ")":
            cur.pos += 1
            break
        name, name_at = cur.word("option name or ')'")
        if name in opts:
            raise cur.error(f"no duplicate {name!r} option", name_at)
        cur.expect(":")
        if name == "msg":
            value: object = cur.quoted()
            if not value:
                raise cur.error("non-empty msg", name_at)
        elif name == "sid":
            value = cur.integer("sid number", 1)
        elif name == "itype":
            if proto != "icmp":
                raise cur.error("itype only on icmp rules", name_at)
            value = cur.integer("ICMP type 0..255", 0, 255)
        elif name == "flags":
            if proto != "tcp":
                raise cur.error("flags only on tcp rules", name_at)
            letters, at = cur.word("TCP flag letters")
            try:
                value = tcp_flags_from_letters(letters)
            except UnknownFlagLetter:
                raise cur.error("TCP flag letters from FSRPAU", at) from None
        elif name == "detection_filter":
            value = _parse_detection_filter(cur)
        else:
            raise cur.error("option msg, itype, flags, detection_filter or sid", name_at)
        opts[name] = value
        cur.expect(";")
    if not cur.at_end():
        raise cur.error("end of rule")
    for required in ("msg", "sid"):
        if required not in opts:
            raise cur.error(f"{required} option")
    return Rule(
        proto=proto, msg=opts["msg"], sid=opts["sid"],
        src_net=src_net, src_port=src_port, dst_net=dst_net, dst_port=dst_port,
        itype=opts.get("itype"), flags=opts.get("flags"),
        detection_filter=opts.get("detection_filter"), line=line,
    )


def _parse_detection_filter(cur: _Cursor) -> DetectionFilter:
    got: dict[str, object] = {}
    while True:
        key, at = cur.word("track, count or seconds")
        if key in got or key not in ("track", "count", "seconds"):
            raise cur.error("track, count or seconds", at)
        if key == "track":
            track, at = cur.word("by_src or by_dst")
            if track not in ("by_src", "by_dst"):
                raise cur.error("by_src or by_dst", at)
            got[key] = track
        else:
            got[key] = cur.integer(f"{key} value", 1)
        if cur.peek() != ",":
            break
        cur.pos += 1
    missing = [k for k in ("track", "count", "seconds") if k not in got]
    if missing:
        raise cur.error(f"detection_filter {missing[0]}")
    return DetectionFilter(got["track"], got["count"], got["seconds"])


def parse_rules(text: str) -> list[Rule]:
    rules: list[Rule] = []
    sids: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not _strip_comment(raw).strip():
            continue
        rule = parse_rule(raw, lineno)
        if rule.sid in sids:
            raise DuplicateSid(f"line {lineno}: sid {rule.sid} already used on line "
                               f"{sids[rule.sid]}", lineno)
        sids[rule.sid] = lineno
        rules.append(rule)
    return rules


def load_rules(path) -> list[Rule]:
    with open(path) as fh:
        return parse_rules(fh.read())


def default_rules_text() -> str:
    return resources.files("flowgate").joinpath("data", "rules.local").read_text()


def default_rules() -> list[Rule]:
    return parse_rules(default_rules_text())


# --- detection --------------------------------------------------------------

class VirtualClock:
    """Simulated time in microsecond ticks; never moves backwards."""

    def __init__(self, start: int = 0):
        self._now = start

    def now(self) -> int:
        return self._now

    def advance_to(self, tick: int) -> None:
        if tick < self._now:
            raise ValueError(f"clock cannot move back from {self._now} to {tick}")
        self._now = tick


@dataclass
class _Window:
    start: int
    count: int = 0
    fired: bool = False


class ThresholdState:
    """Tumbling-window counters keyed by (sid, tracked address)."""

    def __init__(self):
        self.windows: dict[tuple[int, str], _Window] = {}

    def count(self, rule: Rule, key: str, tick: int) -> bool:
        """Count one packet; True when this packet completes the window's threshold."""
        df = rule.detection_filter
        win = self.windows.get((rule.sid, key))
        if win is None or tick >= win.start + df.seconds * TICKS_PER_SECOND:
            win = self.windows[(rule.sid, key)] = _Window(tick)
        if win.fired:
            return False
        win.count += 1
        if win.count >= df.count:
            win.fired = True
            return True
        return False


def match_packet(rules: Iterable[Rule], frame: EthernetFrame, clock: VirtualClock,
                 state: ThresholdState, raw: bytes = b"") -> list[AlertEvent]:
    """Evaluate one packet. At most one alert: the first rule (file order) that fires.

    Threshold rules later in the file still count the packet.
    """
    tick = clock.now()
    fired: Optional[Rule] = None
    for rule in rules:
        if not rule.matches(frame):
            continue
        if rule.detection_filter is not None:
            ip = frame.ip
            key = str(ip.src if rule.detection_filter.track == "by_src" else ip.dst)
            if state.count(rule, key, tick) and fired is None:
                fired = rule
        elif fired is None:
            fired = rule
    if fired is None:
        return []
    return [AlertEvent.from_frame(fired.msg, raw or frame, timestamp=tick, sid=fired.sid)]


class SinkClosed(Exception):
    pass


class TapSummary(NamedTuple):
    packets_seen: int
    alerts_emitted: int


class Detector:
    def __init__(self, rules: list[Rule], clock: Optional[VirtualClock] = None):
        self.rules = list(rules)
        self.clock = clock or VirtualClock()
        self.state = ThresholdState()

    def observe(self, tick: int, frame: Union[bytes, EthernetFrame]) -> list[AlertEvent]:
        self.clock.advance_to(tick)
        raw = b""
        if not isinstance(frame, EthernetFrame):
            raw = bytes(frame)
            try:
                frame = parse_frame(raw)
            except PacketError as exc:
                log.debug("tap frame not parseable: %s", exc)
                return []
        return match_packet(self.rules, frame, self.clock, self.state, raw)


def run_tap(tap: Iterable[tuple[int, Union[bytes, EthernetFrame]]], rules: list[Rule],
            sink: Callable[[AlertEvent], None], clock: Optional[VirtualClock] = None) -> TapSummary:
    detector = Detector(rules, clock)
    seen = emitted = 0
    for tick, frame in tap:
        seen += 1
        for alert in detector.observe(tick, frame):
            try:
                sink(alert)
            except SinkClosed:
                log.info("alert sink closed after %d alerts", emitted)
                return TapSummary(seen, emitted)
            emitted += 1
    return TapSummary(seen, emitted)
