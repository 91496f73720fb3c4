from __future__ import annotations

from ipaddress import IPv4Address

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from flowgate import ofl
from flowgate.packet import (EthernetFrame, IcmpEcho, Ipv4Packet, MacAddr, TcpSegment,
                             finalize)

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WHITELIST_MACS = ["08:00:27:a2:b7:bd", "08:00:27:32:e9:4d", "00:90:f5:c4:0e:8f",
             "00:1d:72:71:03:3a", "68:5b:35:b4:fc:bf"]
ATTACKER = MacAddr.parse("08:00:27:a2:b7:bd")
VICTIM = MacAddr.parse("08:00:27:32:e9:4d")

u8 = st.integers(0, 0xFF)
u16 = st.integers(0, 0xFFFF)
u32 = st.integers(0, 0xFFFFFFFF)
u64 = st.integers(0, 2**64 - 1)
macs = st.binary(min_size=6, max_size=6).map(MacAddr)
ipv4s = u32.map(IPv4Address)

# a small MAC pool makes collisions between entries and packets likely
pool_macs = st.sampled_from([MacAddr(bytes([2, 0, 0, 0, 0, i])) for i in range(1, 5)])


@st.composite
def matches(draw, mac_source=macs, ports=st.integers(1, 4), allow_empty=True):
    m = ofl.Match(
        in_port=draw(st.none() | ports),
        eth_src=draw(st.none() | mac_source),
        eth_dst=draw(st.none() | mac_source),
    )
    if not allow_empty and m.is_empty():
        m = ofl.Match(in_port=draw(ports))
    return m


outputs = st.builds(ofl.Output, u32)
action_lists = st.lists(outputs, max_size=4).map(tuple)


@st.composite
def flow_mods(draw):
    command = draw(st.sampled_from(list(ofl.FlowModCommand)))
    match = draw(matches(ports=u32, allow_empty=command is not ofl.FlowModCommand.ADD))
    return ofl.FlowMod(command, match, draw(u16), draw(action_lists), draw(u64), draw(u32))


ofl_messages = st.one_of(
    st.builds(ofl.Hello, u32),
    st.builds(ofl.EchoRequest, u32, st.binary(max_size=64)),
    st.builds(ofl.EchoReply, u32, st.binary(max_size=64)),
    st.builds(lambda p, f, r, x: ofl.PacketIn(p, f, r, x), u32, st.binary(max_size=200), u8, u32),
    st.builds(lambda p, a, f, x: ofl.PacketOut(p, a, f, x), u32, action_lists,
              st.binary(max_size=200), u32),
    flow_mods(),
)


@st.composite
def frames(draw):
    """Finalized Ethernet frames: ICMP echo, TCP, other IPv4 or opaque."""
    dst, src = draw(macs), draw(macs)
    kind = draw(st.sampled_from(["icmp", "tcp", "ip", "opaque"]))
    if kind == "opaque":
        return finalize(EthernetFrame(dst, src, draw(u16.filter(lambda t: t != 0x0800)),
                                      draw(st.binary(max_size=100))))
    if kind == "icmp":
        payload = IcmpEcho(draw(u8), draw(u8), 0, draw(u16), draw(u16), draw(st.binary(max_size=64)))
        proto = 1
    elif kind == "tcp":
        payload = TcpSegment(draw(u16), draw(u16), draw(u32), draw(u32), 5,
                             draw(st.integers(0, 0x3F)), draw(u16), 0, draw(u16),
                             draw(st.binary(max_size=64)))
        proto = 6
    else:
        proto = draw(u8.filter(lambda p: p not in (1, 6)))
        payload = draw(st.binary(max_size=64))
    ip = Ipv4Packet(draw(ipv4s), draw(ipv4s), proto, payload, tos=draw(u8),
                    identification=draw(u16), flags=draw(st.integers(0, 7)),
                    offset=draw(st.integers(0, 0x1FFF)), ttl=draw(u8))
    return finalize(EthernetFrame(dst, src, 0x0800, ip))


@pytest.fixture
def default_whitelist(tmp_path):
    path = tmp_path / "whitelist.txt"
    path.write_text("\n".join(WHITELIST_MACS) + "\n")
    return path


# one PASS/FAIL line per acceptance criterion at the end of the run
_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_ac" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[name] = "PASS" if report.outcome == "passed" else report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        verdict = "PASS" if _acceptance[name] == "PASS" else "FAIL"
        terminalreporter.write_line(f"{name}: {verdict}")
