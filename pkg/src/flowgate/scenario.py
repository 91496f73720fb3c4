"""Deterministic end-to-end simulation of switch, detector and controller.

All components run on one virtual clock (microsecond ticks). Frames are
injected in (tick, host port, per-host order) order; every ingress is
mirrored to the detector, whose alerts reach the controller in the same
tick, and every controller command passes through the OFL codec before
the switch applies it.
"""
from __future__ import annotations

import configparser
import random
import re
import shutil
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from ipaddress import IPv4Address
from pathlib import Path
from typing import NamedTuple, Optional, Union

from . import ofl
from .access import AccessList, Kind
from .alerts import AlertEvent
from .controller import DEFAULT_POLICY, Controller, Treatment, parse_treatments
from .detector import TICKS_PER_SECOND, Detector, Rule, VirtualClock, default_rules, load_rules
from .events import EventStore
from .packet import (ACK, BROADCAST, FIN, PSH, SYN, URG, MacAddr, build_frame,
                     icmp_echo_frame, tcp_frame)
from .switch import FlowSwitch

Traffic = list[tuple[int, bytes]]

DEFAULT_WHITELIST = (
    "08:00:27:a2:b7:bd", "08:00:27:32:e9:4d", "00:90:f5:c4:0e:8f",
    "00:1d:72:71:03:3a", "68:5b:35:b4:fc:bf",
)
XMAS_FLAGS = FIN | PSH | URG
DEFAULT_SCAN_PORTS = (21, 22, 23, 25, 53, 80, 110, 139, 443, 445)
TIMELINE_BUCKET = TICKS_PER_SECOND // 10


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Host:
    name: str
    port: int
    mac: MacAddr
    ip: IPv4Address

    @classmethod
    def make(cls, name: str, port: int, mac: str, ip: str) -> "Host":
        return cls(name, int(port), MacAddr.parse(mac), IPv4Address(ip))


@dataclass
class Topology:
    hosts: dict[str, Host]
    num_ports: int = 4
    mirror_port: int = 3
    honeypot_port: int = 4

    def __post_init__(self):
        ports = [h.port for h in self.hosts.values()]
        if len(set(ports)) != len(ports):
            raise ConfigError("two hosts bound to the same switch port")
        if self.mirror_port in ports:
            raise ConfigError(f"mirror port {self.mirror_port} cannot carry a host")
        if self.honeypot_port == self.mirror_port:
            raise ConfigError("honeypot and mirror ports must differ")
        for port in ports + [self.mirror_port, self.honeypot_port]:
            if not 1 <= port <= self.num_ports:
                raise ConfigError(f"port {port} outside 1..{self.num_ports}")

    @classmethod
    def default(cls) -> "Topology":
        """Attacker on 1, victim on 2, mirror on 3, honeypot on 4."""
        return cls({
            "attacker": Host.make("attacker", 1, "08:00:27:a2:b7:bd", "172.16.10.100"),
            "victim": Host.make("victim", 2, "08:00:27:32:e9:4d", "172.16.10.2"),
            "honeypot": Host.make("honeypot", 4, "00:90:f5:c4:0e:8f", "172.16.10.250"),
        })

    def host(self, name: str) -> Host:
        try:
            return self.hosts[name]
        except KeyError:
            raise ConfigError(f"unknown host {name!r}") from None

    def host_at(self, port: int) -> Optional[Host]:
        for h in self.hosts.values():
            if h.port == port:
                return h
        return None


# --- traffic generators -----------------------------------------------------

def _ping_payload(tick: int) -> bytes:
    secs, usecs = divmod(tick, TICKS_PER_SECOND)
    return secs.to_bytes(8, "little") + usecs.to_bytes(8, "little") + bytes(range(16, 56))


def gen_ping(src_host: Host, dst_ip, count: int, *, dst_mac: MacAddr = BROADCAST,
             start: int = 0, identifier: int = 3920) -> Traffic:
    """ICMP echo requests, one per second, ttl 64, 56 data bytes, seq from 1."""
    if count < 1:
        raise ValueError("ping count must be at least 1")
    out = []
    for seq in range(1, count + 1):
        tick = start + (seq - 1) * TICKS_PER_SECOND
        frame = icmp_echo_frame(src_host.mac, dst_mac, src_host.ip, dst_ip, identifier, seq,
                                _ping_payload(tick), ttl=64, ip_flags=2,
                                identification=(2405 + seq) & 0xFFFF)
        out.append((tick, build_frame(frame)))
    return out


def gen_xmas_scan(src_host: Host, dst_ip, ports, *, dst_mac: MacAddr = BROADCAST,
                  start: int = 0, seed: int = 0) -> Traffic:
    """One FIN|PSH|URG probe per port, 10 ms apart, ttl 49."""
    ports = list(ports)
    if not ports:
        raise ValueError("an XMAS scan needs at least one target port")
    rng = random.Random(seed)
    sport = rng.randrange(32768, 61000)
    out = []
    for i, port in enumerate(ports):
        frame = tcp_frame(src_host.mac, dst_mac, src_host.ip, dst_ip, sport, port, XMAS_FLAGS,
                          ttl=49, identification=rng.getrandbits(16), window=1024,
                          seq=rng.getrandbits(32))
        out.append((start + i * TICKS_PER_SECOND // 100, build_frame(frame)))
    return out


def gen_syn_flood(src_host: Host, dst_ip, dst_port: int, rate: int, duration: float,
                  rand_source: bool = True, seed: int = 42, *, dst_mac: MacAddr = BROADCAST,
                  start: int = 0) -> Traffic:
    """SYN segments evenly spaced at 1/rate s; spoofed source IPs when ``rand_source``.

    The source MAC is always the host's own.
    """
    if rate < 1:
        raise ValueError("flood rate must be at least 1 packet/s")
    rng = random.Random(seed)
    total = int(round(rate * duration))
    base_sport = rng.randrange(1024, 60000)
    out = []
    for i in range(total):
        src_ip = IPv4Address(rng.getrandbits(32)) if rand_source else src_host.ip
        frame = tcp_frame(src_host.mac, dst_mac, src_ip, dst_ip,
                          (base_sport + i) % 65536, dst_port, SYN,
                          ttl=255, tos=64, ip_flags=2, identification=rng.getrandbits(16),
                          window=512, seq=rng.getrandbits(32))
        out.append((start + i * TICKS_PER_SECOND // rate, build_frame(frame)))
    return out


def gen_benign(src_host: Host, dst_host: Host, count: int = 1, *, start: int = 0,
               interval: int = TICKS_PER_SECOND // 10, dst_port: int = 5001) -> Traffic:
    """Plain ACK segments of an established session; matches no shipped rule."""
    out = []
    for i in range(count):
        frame = tcp_frame(src_host.mac, dst_host.mac, src_host.ip, dst_host.ip,
                          40000 + src_host.port, dst_port, ACK, ttl=64, ip_flags=2,
                          identification=i, window=29200, seq=1000 + i, ack=1)
        out.append((start + i * interval, build_frame(frame)))
    return out


def bootstrap_exchange(a: Host, b: Host, start: int = 0) -> dict[str, Traffic]:
    """a->b, b->a, a->b: leaves a learned flow entry in each direction."""
    step = TICKS_PER_SECOND // 1000
    first = gen_benign(a, b, 1, start=start)
    reply = gen_benign(b, a, 1, start=start + step)
    again = gen_benign(a, b, 1, start=start + 2 * step)
    return {a.name: first + again, b.name: reply}


def merge_traffic(*parts: dict[str, Traffic]) -> dict[str, Traffic]:
    merged: dict[str, Traffic] = {}
    for part in parts:
        for host, items in part.items():
            merged.setdefault(host, []).extend(items)
    return {h: sorted(items, key=lambda it: it[0]) for h, items in merged.items()}


# --- simulation -------------------------------------------------------------

@dataclass
class ScenarioConfig:
    whitelist: list = field(default_factory=lambda: list(DEFAULT_WHITELIST))
    blacklist: list = field(default_factory=list)
    rules: Optional[list[Rule]] = None
    policy: Optional[dict[int, tuple[Treatment, ...]]] = None
    event_store: Optional[Path] = None
    workdir: Optional[Path] = None
    attackers: tuple[str, ...] = ()
    victims: tuple[str, ...] = ()
    attack_start: int = 0
    name: str = "scenario"


class Delivery(NamedTuple):
    tick: int
    port: int
    src_mac: MacAddr
    via: str  # "flow" (table hit) or "packet_out"
    after_mitigation: bool


@dataclass
class Reaction:
    first_attack_tick: Optional[int] = None
    alert_tick: Optional[int] = None
    mitigation_complete_tick: Optional[int] = None

    @property
    def ticks(self) -> Optional[int]:
        if self.first_attack_tick is None or self.mitigation_complete_tick is None:
            return None
        return self.mitigation_complete_tick - self.first_attack_tick


@dataclass
class ScenarioResult:
    name: str
    alerts: dict[Optional[int], int]
    reaction: Reaction
    attacker_packets_delivered_to_victim_after_mitigation: int
    honeypot_received: int
    final_digest: str
    event_log: Optional[Path]
    blacklisted: list[str]
    flow_mods: dict[str, int]
    digest_changes_by_class: dict[Optional[int], int]
    packets_injected: int
    packet_ins: int
    rejected_packet_ins: int
    deliveries: dict[int, int]
    victim_timeline: list[tuple[int, int]]
    attacker_entries: list[str]
    controller_log: list[str] = field(repr=False, default_factory=list)

    def summary(self) -> str:
        def fmt_map(m):
            return ", ".join(f"{'none' if k is None else k}:{v}"
                             for k, v in sorted(m.items(), key=lambda kv: (kv[0] is None, kv[0] or 0)))
        r = self.reaction
        lines = [
            f"scenario: {self.name}",
            f"packets injected: {self.packets_injected}",
            f"alerts: {fmt_map(self.alerts) or 'none'}",
            f"first_attack_tick: {r.first_attack_tick}",
            f"alert_tick: {r.alert_tick}",
            f"mitigation_complete_tick: {r.mitigation_complete_tick}",
            f"reaction_ticks: {r.ticks}",
            f"flow_mods: {fmt_map(self.flow_mods) or 'none'}",
            f"packet_ins: {self.packet_ins} (rejected {self.rejected_packet_ins})",
            f"attacker_packets_delivered_to_victim_after_mitigation: "
            f"{self.attacker_packets_delivered_to_victim_after_mitigation}",
            f"honeypot_received: {self.honeypot_received}",
            f"blacklisted: {', '.join(self.blacklisted) or 'none'}",
            f"attacker flow entries: {len(self.attacker_entries)}",
        ]
        lines += [f"  {e}" for e in self.attacker_entries]
        lines.append("victim deliveries per 100 ms: " + (
            " ".join(f"{t // 1000}ms={n}" for t, n in self.victim_timeline) or "none"))
        lines.append("flow table:")
        lines += [f"  {line}" for line in self.final_digest.splitlines()]
        if self.event_log is not None:
            lines.append(f"event log: {self.event_log}")
        return "\n".join(lines)


class Simulation:
    def __init__(self, topology: Topology, config: ScenarioConfig):
        self.topology = topology
        self.config = config
        self._tmp = None
        workdir = config.workdir
        if workdir is None:
            self._tmp = tempfile.mkdtemp(prefix="flowgate-sim-")
            workdir = Path(self._tmp)
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        wl_path, bl_path = workdir / "whitelist.txt", workdir / "blacklist.txt"
        wl_path.write_text("".join(f"{MacAddr.parse(m)}\n" for m in config.whitelist))
        bl_path.write_text("".join(f"{MacAddr.parse(m)}\n" for m in config.blacklist))

        if config.event_store is not None:
            Path(config.event_store).unlink(missing_ok=True)
        self.store = EventStore(config.event_store, clock="virtual")
        self.controller = Controller(
            AccessList.load(wl_path, Kind.WHITELIST), AccessList.load(bl_path, Kind.BLACKLIST),
            self.store, topology.honeypot_port, config.policy,
        )
        self.switch = FlowSwitch(topology.num_ports, topology.mirror_port)
        self.clock = VirtualClock()
        rules = config.rules if config.rules is not None else default_rules()
        self.detector = Detector(rules, self.clock)
        self.xids = ofl.XidCounter()

        self.attacker_macs = {topology.host(n).mac for n in config.attackers}
        self.victim_ports = {topology.host(n).port for n in config.victims}
        self.alerts: Counter = Counter()
        self.digest_changes: Counter = Counter()
        self.flow_mods: Counter = Counter()
        self.reaction = Reaction()
        self.log: list[str] = []
        self.packets_injected = 0
        self.packet_ins = 0
        self.rejected = 0
        self.deliveries: Counter = Counter()
        self.after_mitigation = 0
        self.honeypot_received = 0
        self.timeline: Counter = Counter()
        self.trace: list[Delivery] = []
        self._mitigated = False
        self._ingress_mitigated = False
        self._attack_phase = False

        for cmd in self.controller.startup_reconcile():
            self._send(cmd)

    def close(self) -> None:
        self.store.close()
        if self._tmp is not None:
            shutil.rmtree(self._tmp, ignore_errors=True)
            self._tmp = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # commands travel over the OFL codec like they would on a real connection
    def _send(self, cmd) -> None:
        self.xids.stamp(cmd)
        cmd = ofl.decode(ofl.encode(cmd))
        if isinstance(cmd, ofl.FlowMod):
            self.flow_mods[cmd.command.name.lower()] += 1
            self.switch.apply_flow_mod(cmd)
        elif isinstance(cmd, ofl.PacketOut):
            for port, frame in self.switch.apply_packet_out(cmd):
                self._deliver(port, frame, "packet_out")

    # a frame counts as post-mitigation only if it entered the switch after
    # mitigation completed; the triggering frame was already in flight
    def _deliver(self, port: int, frame: bytes, via: str) -> None:
        src = MacAddr(bytes(frame[6:12]))
        self.trace.append(Delivery(self.clock.now(), port, src, via, self._ingress_mitigated))
        self.deliveries[port] += 1
        if port == self.topology.honeypot_port and self._attack_phase:
            self.honeypot_received += 1
        if port in self.victim_ports:
            self.timeline[self.clock.now() // TIMELINE_BUCKET * TIMELINE_BUCKET] += 1
            if self._ingress_mitigated and src in self.attacker_macs:
                self.after_mitigation += 1

    def _handle_alert(self, alert: AlertEvent) -> None:
        tick = self.clock.now()
        self.alerts[alert.class_] += 1
        if self.reaction.alert_tick is None:
            self.reaction.alert_tick = tick
        before = self.switch.table_digest()
        outcome = self.controller.on_alert(alert)
        self.log.extend(outcome.log)
        for cmd in outcome.commands:
            self._send(cmd)
        if self.switch.table_digest() != before:
            self.digest_changes[alert.class_] += 1
        if not self._mitigated:
            self._mitigated = True
            self.reaction.mitigation_complete_tick = tick

    def inject(self, tick: int, port: int, frame: bytes) -> None:
        self.clock.advance_to(tick)
        self.packets_injected += 1
        self._ingress_mitigated = self._mitigated
        src = MacAddr(bytes(frame[6:12]))
        if (not self._attack_phase and src in self.attacker_macs
                and tick >= self.config.attack_start):
            self._attack_phase = True
            self.reaction.first_attack_tick = tick
        emissions, packet_in = self.switch.ingress(port, frame)
        for out_port, out_frame in emissions:
            if out_port == self.switch.mirror_port:
                for alert in self.detector.observe(tick, out_frame):
                    self._handle_alert(alert)
            else:
                self._deliver(out_port, out_frame, "flow")
        if packet_in is not None:
            self.packet_ins += 1
            self.xids.stamp(packet_in)
            outcome = self.controller.on_packet_in(ofl.decode(ofl.encode(packet_in)))
            self.log.extend(outcome.log)
            if not outcome.commands:
                self.rejected += 1
            for cmd in outcome.commands:
                self._send(cmd)

    def run(self, traffic: dict[str, Traffic]) -> ScenarioResult:
        schedule = []
        for name, items in traffic.items():
            port = self.topology.host(name).port
            schedule.extend((tick, port, i, frame) for i, (tick, frame) in enumerate(items))
        schedule.sort(key=lambda s: s[:3])
        for tick, port, _, frame in schedule:
            self.inject(tick, port, frame)
        return self.result()

    def result(self) -> ScenarioResult:
        entries = [e for e in self.switch.sorted_entries()
                   if any(e.match.involves(m) for m in self.attacker_macs)]
        return ScenarioResult(
            name=self.config.name,
            alerts=dict(self.alerts),
            reaction=Reaction(**vars(self.reaction)),
            attacker_packets_delivered_to_victim_after_mitigation=self.after_mitigation,
            honeypot_received=self.honeypot_received,
            final_digest=self.switch.table_digest(),
            event_log=Path(self.config.event_store) if self.config.event_store else None,
            blacklisted=self.controller.blacklist.as_strings(),
            flow_mods=dict(self.flow_mods),
            digest_changes_by_class=dict(self.digest_changes),
            packets_injected=self.packets_injected,
            packet_ins=self.packet_ins,
            rejected_packet_ins=self.rejected,
            deliveries=dict(self.deliveries),
            victim_timeline=sorted(self.timeline.items()),
            attacker_entries=[e.describe() for e in entries],
            controller_log=list(self.log),
        )


def run_scenario(topology: Topology, traffic: dict[str, Traffic],
                 config: ScenarioConfig) -> ScenarioResult:
    with Simulation(topology, config) as sim:
        return sim.run(traffic)


# --- scenario description files ----------------------------------------------

ATTACK_KINDS = ("ping", "xmas", "syn_flood")
_OPS = {
    "==": lambda a, b: a == b, "!=": lambda a, b: a != b,
    "<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b, ">": lambda a, b: a > b,
}
_COMPARISON = re.compile(r"\s*(==|!=|<=|>=|<|>)?\s*(-?\d+)\s*$")


@dataclass
class ScenarioSpec:
    name: str
    topology: Topology
    config: ScenarioConfig
    traffic: dict[str, Traffic]
    expect: dict[str, str]
    seed: int

    def run(self, event_store=None) -> ScenarioResult:
        if event_store is not None:
            self.config.event_store = Path(event_store)
        return run_scenario(self.topology, self.traffic, self.config)


def _kv(tokens: list[str], where: str) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ConfigError(f"{where}: expected key=value, got {tok!r}")
        out[key] = value
    return out


def _ticks(seconds: str) -> int:
    return int(round(float(seconds) * TICKS_PER_SECOND))


def _port_list(text: Optional[str]) -> list[int]:
    """``21,22,80`` or ``20-29``, or a mix; None gives the default scan ports."""
    if text is None:
        return list(DEFAULT_SCAN_PORTS)
    ports = []
    for item in text.split(","):
        lo, _, hi = item.partition("-")
        ports.extend(range(int(lo), int(hi or lo) + 1))
    return ports


def _bool(text: str) -> bool:
    if text.lower() in ("1", "yes", "true", "on"):
        return True
    if text.lower() in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _macs(text: str) -> list[str]:
    return [str(MacAddr.parse(m)) for m in text.replace(",", " ").split()]


def shipped_scenarios() -> dict[str, Path]:
    root = resources.files("flowgate").joinpath("data", "scenarios")
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".ini")}


def resolve_scenario(name_or_path: Union[str, Path]) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    shipped = shipped_scenarios()
    if str(name_or_path) in shipped:
        return shipped[str(name_or_path)]
    raise ConfigError(f"no scenario file {name_or_path}")


def load_scenario(path, seed: Optional[int] = None) -> ScenarioSpec:
    path = resolve_scenario(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return _build_spec(parser, path, seed)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_spec(parser: configparser.ConfigParser, path: Path, seed: Optional[int]) -> ScenarioSpec:
    meta = parser["scenario"] if parser.has_section("scenario") else {}
    name = meta.get("name", path.stem)
    if seed is None:
        seed = int(meta.get("seed", "42"))

    if parser.has_section("hosts"):
        hosts = {}
        for hname, spec in parser["hosts"].items():
            kv = _kv(spec.split(), f"host {hname}")
            hosts[hname] = Host.make(hname, kv["port"], kv["mac"], kv["ip"])
        topology = Topology(hosts, int(meta.get("ports", 4)), int(meta.get("mirror_port", 3)),
                            int(meta.get("honeypot_port", 4)))
    else:
        topology = Topology.default()

    config = ScenarioConfig(name=name)
    if parser.has_section("whitelist"):
        config.whitelist = _macs(parser["whitelist"].get("macs", ""))
    if parser.has_section("blacklist"):
        config.blacklist = _macs(parser["blacklist"].get("macs", ""))
    if "rules" in meta:
        config.rules = load_rules(path.parent / meta["rules"])
    if parser.has_section("policy"):
        policy = dict(DEFAULT_POLICY)
        for cls, value in parser["policy"].items():
            policy[int(cls)] = parse_treatments(value)
        config.policy = policy

    parts = []
    attackers, victims, starts = [], [], []
    steps = parser["traffic"] if parser.has_section("traffic") else {}
    for key, line in steps.items():
        tokens = line.split()
        if key == "bootstrap":
            if len(tokens) != 2:
                raise ConfigError("bootstrap needs two host names")
            a, b = topology.host(tokens[0]), topology.host(tokens[1])
            parts.append(bootstrap_exchange(a, b))
            continue
        if not tokens:
            raise ConfigError(f"traffic step {key} is empty")
        kind, kv = tokens[0], _kv(tokens[1:], f"traffic step {key}")
        src, dst = topology.host(kv.pop("src")), topology.host(kv.pop("dst"))
        try:
            start = _ticks(kv.pop("start", "1.0"))
            if kind == "ping":
                items = gen_ping(src, dst.ip, int(kv.pop("count", 4)), dst_mac=dst.mac, start=start)
            elif kind == "xmas":
                ports = _port_list(kv.pop("ports", None))
                items = gen_xmas_scan(src, dst.ip, ports, dst_mac=dst.mac, start=start, seed=seed)
            elif kind == "syn_flood":
                items = gen_syn_flood(src, dst.ip, int(kv.pop("dst_port", 80)), int(kv.pop("rate", 1000)),
                                      float(kv.pop("duration", 1)), _bool(kv.pop("rand_source", "yes")),
                                      seed, dst_mac=dst.mac, start=start)
            elif kind == "benign":
                items = gen_benign(src, dst, int(kv.pop("count", 10)), start=start,
                                   interval=_ticks(kv.pop("interval", "0.1")))
            else:
                raise ConfigError(f"unknown traffic generator {kind!r}")
        except ValueError as exc:
            raise ConfigError(f"traffic step {key}: {exc}") from exc
        if kv:
            raise ConfigError(f"traffic step {key}: unknown parameters {sorted(kv)}")
        if kind in ATTACK_KINDS:
            attackers.append(src.name)
            victims.append(dst.name)
            starts.append(start)
        parts.append({src.name: items})

    config.attackers = tuple(dict.fromkeys(attackers))
    config.victims = tuple(dict.fromkeys(victims))
    config.attack_start = min(starts) if starts else 0
    expect = dict(parser["expect"]) if parser.has_section("expect") else {}
    return ScenarioSpec(name, topology, config, merge_traffic(*parts), expect, seed)


def _observe(result: ScenarioResult, key: str):
    if key.startswith("alerts."):
        which = key.split(".", 1)[1]
        if which == "total":
            return sum(result.alerts.values())
        return result.alerts.get(None if which == "none" else int(which), 0)
    if key.startswith("flow_mods."):
        return result.flow_mods.get(key.split(".", 1)[1], 0)
    if key.startswith("digest_changes."):
        return result.digest_changes_by_class.get(int(key.split(".", 1)[1]), 0)
    simple = {
        "delivered_after_mitigation": result.attacker_packets_delivered_to_victim_after_mitigation,
        "honeypot_received": result.honeypot_received,
        "reaction_ticks": result.reaction.ticks,
        "attacker_flows": len(result.attacker_entries),
        "rejected_packet_ins": result.rejected_packet_ins,
    }
    if key not in simple:
        raise ConfigError(f"unknown expectation {key!r}")
    return simple[key]


def check_expectations(result: ScenarioResult, expect: dict[str, str]) -> list[str]:
    """Return one message per failed expectation (empty when all hold)."""
    failures = []
    for key, want in expect.items():
        if key in ("blacklisted", "not_blacklisted"):
            for mac in _macs(want):
                listed = mac in result.blacklisted
                if listed != (key == "blacklisted"):
                    failures.append(f"{key}: {mac} {'missing from' if not listed else 'present in'} blacklist")
            continue
        if key == "attacker_flow_port":
            target = f"actions=output:{int(want)} "
            bad = [e for e in result.attacker_entries if target not in e]
            if bad or not result.attacker_entries:
                failures.append(f"attacker_flow_port: entries not all output:{want}: {bad}")
            continue
        m = _COMPARISON.match(want)
        if not m:
            raise ConfigError(f"expectation {key}: cannot parse {want!r}")
        op, number = m.group(1) or "==", int(m.group(2))
        got = _observe(result, key)
        if got is None or not _OPS[op](got, number):
            failures.append(f"{key}: expected {op} {number}, got {got}")
    return failures
