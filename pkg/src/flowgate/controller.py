"""Learning-switch controller with MAC admission control and alert mitigation."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Union

from .access import AccessList, Kind, PersistFailure
from .alert_wire import DEFAULT_ALERT_PORT
from .alerts import AlertEvent, classify_alert
from .events import EventStore, StoredEvent
from .ofl import PORT_FLOOD, FlowMod, FlowModCommand, Match, Output, PacketIn, PacketOut
from .packet import MacAddr

log = logging.getLogger(__name__)

REJECT_NOT_REGISTERED = "Not registered MAC - Contact the Administrator!"
REJECT_SUSPECT = "Packet_in not handled - suspect MAC!"
BANNER_REGISTERED = "***** Registered MAC Address *****"
BANNER_BLACKLIST = "***** MAC Address in Blacklist *****"
BANNER_SOURCE = "***** MAC Source *****"

FLOW_PRIORITY = 10
DEFAULT_LISTEN = "127.0.0.1:6653"


class Treatment(str, enum.Enum):
    STORE = "store"
    REWRITE = "rewrite"
    DROP = "drop"
    BLACKLIST = "blacklist"
    WARN = "warn"


# the action_taken word recorded for each treatment
_RECORDED = {
    Treatment.STORE: "stored",
    Treatment.REWRITE: "rewritten",
    Treatment.DROP: "dropped",
    Treatment.BLACKLIST: "blacklisted",
    Treatment.WARN: "warned",
}

DEFAULT_POLICY: dict[int, tuple[Treatment, ...]] = {
    1: (Treatment.STORE,),
    2: (Treatment.STORE, Treatment.REWRITE),
    3: (Treatment.STORE, Treatment.DROP, Treatment.BLACKLIST),
}
FALLBACK_POLICY = (Treatment.STORE, Treatment.WARN)


class ConfigError(Exception):
    pass


def parse_treatments(text: str) -> tuple[Treatment, ...]:
    try:
        actions = tuple(Treatment(t.strip().lower()) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"unknown treatment in {text!r}") from exc
    if not actions:
        raise ConfigError("a policy entry needs at least one treatment")
    return actions


@dataclass
class ControllerConfig:
    honeypot_port: int = 4
    mirror_port: int = 3
    whitelist: Path = Path("whitelist.txt")
    blacklist: Path = Path("blacklist.txt")
    alert_port: str = str(DEFAULT_ALERT_PORT)
    event_store: Path = Path("events.jsonl")
    listen: str = DEFAULT_LISTEN
    tap: Optional[str] = None
    rules: Optional[Path] = None
    policy: dict[int, tuple[Treatment, ...]] = field(default_factory=lambda: dict(DEFAULT_POLICY))

    def __post_init__(self):
        if self.honeypot_port == self.mirror_port:
            raise ConfigError("honeypot_port and mirror_port must differ")

    _PATHS = ("whitelist", "blacklist", "event_store", "rules")
    _INTS = ("honeypot_port", "mirror_port")
    _STRINGS = ("alert_port", "listen", "tap")

    @classmethod
    def from_text(cls, text: str, base_dir: Union[str, Path] = ".") -> "ControllerConfig":
        base = Path(base_dir)
        values: dict[str, object] = {}
        policy = dict(DEFAULT_POLICY)
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ConfigError(f"line {lineno}: expected key=value")
            if key.startswith("policy."):
                try:
                    policy[int(key[len("policy."):])] = parse_treatments(value)
                except ValueError:
                    raise ConfigError(f"line {lineno}: bad policy class in {key!r}") from None
            elif key in cls._PATHS:
                values[key] = base / value
            elif key in cls._INTS:
                try:
                    values[key] = int(value)
                except ValueError:
                    raise ConfigError(f"line {lineno}: {key} must be an integer") from None
            elif key in cls._STRINGS:
                values[key] = value
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        return cls(policy=policy, **values)

    @classmethod
    def load(cls, path) -> "ControllerConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, path.parent)


class PacketInOutcome(NamedTuple):
    commands: list[Union[FlowMod, PacketOut]]
    log: list[str]


class AlertOutcome(NamedTuple):
    commands: list[FlowMod]
    stored: Optional[StoredEvent]
    blacklisted: Optional[MacAddr]
    log: list[str]


def _mac_filters(mac: MacAddr) -> tuple[Match, Match]:
    return Match(eth_src=mac), Match(eth_dst=mac)


class Controller:
    """Processes Packet_in and alert events one at a time, in arrival order."""

    def __init__(self, whitelist: AccessList, blacklist: AccessList,
                 store: Optional[EventStore] = None, honeypot_port: int = 4,
                 policy: Optional[dict[int, tuple[Treatment, ...]]] = None, verbose: bool = True):
        if whitelist.kind is not Kind.WHITELIST or blacklist.kind is not Kind.BLACKLIST:
            raise ValueError("pass the whitelist first, then the blacklist")
        self.whitelist = whitelist
        self.blacklist = blacklist
        self.store = store if store is not None else EventStore()
        self.honeypot_port = honeypot_port
        self.policy = dict(DEFAULT_POLICY if policy is None else policy)
        self.verbose = verbose
        self.mac_table: dict[MacAddr, int] = {}
        self.redirected: set[MacAddr] = set()
        # blacklisted in memory but not yet persisted; still enforced
        self.unpersisted: set[MacAddr] = set()

    @classmethod
    def from_config(cls, config: ControllerConfig, store: Optional[EventStore] = None,
                    **kwargs) -> "Controller":
        whitelist = AccessList.load(config.whitelist, Kind.WHITELIST)
        blacklist = AccessList.load(config.blacklist, Kind.BLACKLIST)
        return cls(whitelist, blacklist, store, config.honeypot_port, config.policy, **kwargs)

    def is_suspect(self, mac: MacAddr) -> bool:
        return mac in self.blacklist or mac in self.unpersisted

    def banner(self, src: MacAddr) -> list[str]:
        return [
            BANNER_REGISTERED, str(self.whitelist.as_strings()),
            BANNER_BLACKLIST, str(self.blacklist.as_strings()),
            BANNER_SOURCE, str(src),
        ]

    def _reject(self, src: MacAddr, reason: str) -> PacketInOutcome:
        lines = (self.banner(src) if self.verbose else []) + [reason]
        for line in lines:
            log.info(line)
        return PacketInOutcome([], lines)

    def on_packet_in(self, msg: PacketIn) -> PacketInOutcome:
        frame = msg.frame
        if len(frame) < 14:
            line = f"Packet_in dropped - unparseable frame ({len(frame)} bytes)"
            log.warning(line)
            return PacketInOutcome([], [line])
        dst, src = MacAddr(bytes(frame[0:6])), MacAddr(bytes(frame[6:12]))

        if self.is_suspect(src):
            return self._reject(src, REJECT_SUSPECT)
        if src not in self.whitelist:
            return self._reject(src, REJECT_NOT_REGISTERED)

        self.mac_table[src] = msg.in_port
        if self.is_suspect(dst):
            line = f"Packet_in dropped - destination {dst} is blacklisted"
            log.info(line)
            return PacketInOutcome([], [line])

        trapped = src in self.redirected or dst in self.redirected
        out_port = self.honeypot_port if trapped else self.mac_table.get(dst)
        if out_port is None:
            return PacketInOutcome([PacketOut(msg.in_port, (Output(PORT_FLOOD),), frame)], [])
        actions = (Output(out_port),)
        add = FlowMod(FlowModCommand.ADD, Match(in_port=msg.in_port, eth_src=src, eth_dst=dst),
                      FLOW_PRIORITY, actions)
        return PacketInOutcome([add, PacketOut(msg.in_port, actions, frame)], [])

    def treatments_for(self, event: AlertEvent) -> tuple[Treatment, ...]:
        cls = event.class_ if event.class_ is not None else classify_alert(event.msg)
        return self.policy.get(cls, FALLBACK_POLICY) if cls is not None else FALLBACK_POLICY

    def on_alert(self, event: AlertEvent) -> AlertOutcome:
        mac = event.src_mac
        treatments = self.treatments_for(event)
        if Treatment.BLACKLIST in treatments and self.is_suspect(mac):
            # repeat alert for a MAC already blacklisted: record it, nothing more
            treatments = tuple(t for t in treatments if t is Treatment.STORE)

        commands: list[FlowMod] = []
        lines: list[str] = []
        done: list[str] = []
        blacklisted = None
        for treatment in treatments:
            if treatment is Treatment.REWRITE:
                for match in _mac_filters(mac):
                    commands.append(FlowMod(FlowModCommand.MODIFY, match, FLOW_PRIORITY,
                                            (Output(self.honeypot_port),)))
                if mac not in self.redirected:
                    self.redirected.add(mac)
                    lines.append(f"REWRITE flow entries of {mac} to port {self.honeypot_port}")
            elif treatment is Treatment.DROP:
                commands.extend(FlowMod(FlowModCommand.DELETE, m) for m in _mac_filters(mac))
                self.mac_table.pop(mac, None)
                lines.append(f"DROP flow entries of {mac}")
            elif treatment is Treatment.BLACKLIST:
                try:
                    self.blacklist.blacklist_add(mac)
                    lines.append(f"MAC {mac} inserted in Blacklist")
                except PersistFailure as exc:
                    self.unpersisted.add(mac)
                    lines.append(f"ERROR: blacklist not persisted for {mac}: {exc}")
                blacklisted = mac
            elif treatment is Treatment.WARN:
                lines.append(f"WARNING: unclassified alert {event.msg!r} from {mac} "
                             "- administrator attention required")
            done.append(_RECORDED[treatment])

        stored = None
        if Treatment.STORE in treatments:
            stored = StoredEvent(
                ts=event.timestamp, msg=event.msg, class_=event.class_, sid=event.sid,
                src_mac=str(event.src_mac), dst_mac=str(event.dst_mac),
                src_ip=event.src_ip, dst_ip=event.dst_ip, proto=event.proto,
                action_taken=done,
            )
            stored.seq = self.store.append(stored)
        for line in lines:
            log.info(line)
        return AlertOutcome(commands, stored, blacklisted, lines)

    def startup_reconcile(self) -> list[FlowMod]:
        """Delete any flow left over for a MAC that is already blacklisted."""
        commands = []
        for mac in self.blacklist:
            commands.extend(FlowMod(FlowModCommand.DELETE, m) for m in _mac_filters(mac))
        return commands
