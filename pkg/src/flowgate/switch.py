"""Single-table flow switch with a mirror (tap) port."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .ofl import PORT_FLOOD, FlowMod, FlowModCommand, Match, Output, PacketIn, PacketOut
from .packet import MacAddr, Truncated


class InvalidPort(ValueError):
    pass


@dataclass
class FlowEntry:
    priority: int
    match: Match
    actions: tuple[Output, ...]
    cookie: int = 0
    install_seq: int = 0
    packets: int = 0
    bytes: int = 0

    def describe(self) -> str:
        actions = ",".join(str(a) for a in self.actions) or "drop"
        return (f"prio={self.priority} match={self.match} actions={actions} "
                f"cookie={self.cookie:#x} pkts={self.packets}")


class Emission(NamedTuple):
    port: int
    frame: bytes


class ModResult(NamedTuple):
    kind: str  # "added" | "modified" | "deleted"
    count: int


class IngressResult(NamedTuple):
    emissions: list[Emission]
    packet_in: Optional[PacketIn]


class FlowSwitch:
    def __init__(self, num_ports: int = 4, mirror_port: Optional[int] = 3):
        if num_ports < 1:
            raise ValueError("switch needs at least one port")
        if mirror_port is not None and not 1 <= mirror_port <= num_ports:
            raise InvalidPort(f"mirror port {mirror_port} outside 1..{num_ports}")
        self.num_ports = num_ports
        self.mirror_port = mirror_port
        self.entries: list[FlowEntry] = []
        self._seq = itertools.count(1)

    @property
    def data_ports(self) -> list[int]:
        return [p for p in range(1, self.num_ports + 1) if p != self.mirror_port]

    def _check_port(self, port: int) -> None:
        if port not in self.data_ports:
            raise InvalidPort(f"port {port} is not a data port of this switch")

    def _check_actions(self, actions) -> None:
        for action in actions:
            if action.port != PORT_FLOOD:
                self._check_port(action.port)

    def _expand(self, actions, in_port: int) -> list[int]:
        ports = []
        for action in actions:
            if action.port == PORT_FLOOD:
                ports.extend(p for p in self.data_ports if p != in_port)
            else:
                ports.append(action.port)
        return ports

    def lookup(self, in_port: int, eth_src: MacAddr, eth_dst: MacAddr) -> Optional[FlowEntry]:
        best = None
        for entry in self.entries:
            if not entry.match.matches_packet(in_port, eth_src, eth_dst):
                continue
            if best is None or (entry.priority, -entry.install_seq) > (best.priority, -best.install_seq):
                best = entry
        return best

    def ingress(self, port: int, frame: bytes) -> IngressResult:
        self._check_port(port)
        if len(frame) < 14:
            raise Truncated(f"frame of {len(frame)} bytes")
        emissions = []
        if self.mirror_port is not None:
            emissions.append(Emission(self.mirror_port, frame))
        entry = self.lookup(port, MacAddr(bytes(frame[6:12])), MacAddr(bytes(frame[0:6])))
        if entry is None:
            return IngressResult(emissions, PacketIn(port, bytes(frame)))
        entry.packets += 1
        entry.bytes += len(frame)
        emissions.extend(Emission(p, frame) for p in self._expand(entry.actions, port))
        return IngressResult(emissions, None)

    def apply_flow_mod(self, mod: FlowMod) -> ModResult:
        if mod.command is FlowModCommand.ADD:
            self._check_actions(mod.actions)
            self.entries = [e for e in self.entries
                            if not (e.match == mod.match and e.priority == mod.priority)]
            self.entries.append(FlowEntry(mod.priority, mod.match, mod.actions, mod.cookie,
                                          next(self._seq)))
            return ModResult("added", 1)
        selected = [e for e in self.entries if mod.match.covers(e.match)]
        if mod.command is FlowModCommand.MODIFY:
            self._check_actions(mod.actions)
            for entry in selected:
                entry.actions = mod.actions
            return ModResult("modified", len(selected))
        self.entries = [e for e in self.entries if not mod.match.covers(e.match)]
        return ModResult("deleted", len(selected))

    def apply_packet_out(self, msg: PacketOut) -> list[Emission]:
        self._check_actions(msg.actions)
        return [Emission(p, msg.frame) for p in self._expand(msg.actions, msg.in_port)]

    def sorted_entries(self) -> list[FlowEntry]:
        return sorted(self.entries, key=lambda e: (-e.priority, e.install_seq))

    def table_digest(self) -> str:
        if not self.entries:
            return "0 entries"
        return "\n".join(e.describe() for e in self.sorted_entries())

    def entries_involving(self, mac: MacAddr) -> list[FlowEntry]:
        return [e for e in self.entries if e.match.involves(mac)]
