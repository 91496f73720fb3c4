import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowgate.access import AccessList, Kind, PersistFailure
from flowgate.alerts import AlertEvent, classify_alert
from flowgate.controller import (BANNER_BLACKLIST, BANNER_REGISTERED, BANNER_SOURCE,
                                 REJECT_NOT_REGISTERED, REJECT_SUSPECT, ConfigError, Controller,
                                 ControllerConfig, Treatment)
from flowgate.events import EventStore
from flowgate.ofl import PORT_FLOOD, FlowMod, FlowModCommand, Match, Output, PacketIn, PacketOut
from flowgate.packet import MacAddr, build_frame, tcp_frame
from flowgate.switch import FlowSwitch

from .conftest import ATTACKER, WHITELIST_MACS, VICTIM

STRANGER = MacAddr.parse("00:01:5c:48:0e:41")


def frame(src, dst):
    return build_frame(tcp_frame(src, dst, "172.16.10.100", "172.16.10.2", 4000, 80, 0x10))


def make(whitelist=WHITELIST_MACS, blacklist=(), store=None, tmp_path=None, **kw):
    bl_path = tmp_path / "bl.txt" if tmp_path else None
    wl = AccessList(Kind.WHITELIST, entries=whitelist)
    bl = AccessList(Kind.BLACKLIST, bl_path, blacklist)
    return Controller(wl, bl, store if store is not None else EventStore(), **kw)


def alert(msg, src=ATTACKER, dst=VICTIM, ts=0):
    return AlertEvent.from_frame(msg, frame(src, dst), timestamp=ts)


def test_unregistered_mac_rejected_with_golden_line():
    ctl = make()
    out = ctl.on_packet_in(PacketIn(1, frame(STRANGER, VICTIM)))
    assert out.commands == []
    assert out.log[-1] == "Not registered MAC - Contact the Administrator!"
    assert out.log[:-1] == [BANNER_REGISTERED, str(WHITELIST_MACS), BANNER_BLACKLIST, "[]",
                            BANNER_SOURCE, str(STRANGER)]
    assert STRANGER not in ctl.mac_table


def test_blacklisted_mac_rejected_first():
    ctl = make(blacklist=[ATTACKER])  # also whitelisted: the blacklist gate wins
    out = ctl.on_packet_in(PacketIn(1, frame(ATTACKER, VICTIM)))
    assert out.commands == []
    assert out.log[-1] == "Packet_in not handled - suspect MAC!"
    assert REJECT_SUSPECT == out.log[-1]
    assert REJECT_NOT_REGISTERED not in out.log
    assert ATTACKER not in ctl.mac_table


def test_unknown_destination_floods_and_learns():
    ctl = make()
    raw = frame(ATTACKER, VICTIM)
    out = ctl.on_packet_in(PacketIn(1, raw))
    assert out.commands == [PacketOut(1, (Output(PORT_FLOOD),), raw)]
    assert ctl.mac_table == {ATTACKER: 1}


def test_known_destination_installs_flow():
    ctl = make()
    ctl.on_packet_in(PacketIn(2, frame(VICTIM, ATTACKER)))
    raw = frame(ATTACKER, VICTIM)
    add, out = ctl.on_packet_in(PacketIn(1, raw)).commands
    assert add == FlowMod(FlowModCommand.ADD, Match(1, ATTACKER, VICTIM), 10, (Output(2),))
    assert out == PacketOut(1, (Output(2),), raw)


def test_short_frame_logged_not_fatal():
    out = make().on_packet_in(PacketIn(1, b"\x00" * 10))
    assert out.commands == [] and "unparseable" in out.log[0]


@pytest.mark.parametrize("msg,cls", [
    ("Class 1 - ICMP detected", 1),
    ("Class 2 - SCAN Nmap XMAS", 2),
    ("Classe 3 - Hping3 DoS Detected", 3),
    ("class 12 - lowercase", 12),
    ("suspicious stuff", None),
    ("The Class 2 thing", None),
])
def test_classify(msg, cls):
    assert classify_alert(msg) == cls


def test_class1_store_only():
    store = EventStore()
    ctl = make(store=store)
    out = ctl.on_alert(alert("Class 1 - ICMP detected"))
    assert out.commands == [] and out.blacklisted is None
    assert store.events[0].action_taken == ["stored"]


def test_class2_two_modifies_to_honeypot():
    ctl = make()
    out = ctl.on_alert(alert("Class 2 - SCAN Nmap XMAS"))
    assert out.commands == [
        FlowMod(FlowModCommand.MODIFY, Match(eth_src=ATTACKER), 10, (Output(4),)),
        FlowMod(FlowModCommand.MODIFY, Match(eth_dst=ATTACKER), 10, (Output(4),)),
    ]
    assert ATTACKER not in ctl.blacklist
    assert out.stored.action_taken == ["stored", "rewritten"]
    # repeated alerts re-emit the rewrite but log it once
    again = ctl.on_alert(alert("Class 2 - SCAN Nmap XMAS"))
    assert len(again.commands) == 2 and again.log == []


def test_class3_deletes_and_blacklists(tmp_path):
    ctl = make(tmp_path=tmp_path)
    out = ctl.on_alert(alert("Classe 3 - Hping3 DoS Detected"))
    assert out.commands == [FlowMod(FlowModCommand.DELETE, Match(eth_src=ATTACKER)),
                            FlowMod(FlowModCommand.DELETE, Match(eth_dst=ATTACKER))]
    assert out.blacklisted == ATTACKER
    assert (tmp_path / "bl.txt").read_text() == "08:00:27:a2:b7:bd\n"
    assert out.stored.action_taken == ["stored", "dropped", "blacklisted"]
    repeat = ctl.on_alert(alert("Classe 3 - Hping3 DoS Detected"))
    assert repeat.commands == [] and repeat.stored.action_taken == ["stored"]


def test_unknown_class_warns():
    out = make().on_alert(alert("suspicious stuff"))
    assert out.commands == []
    assert out.stored.action_taken == ["stored", "warned"]
    assert out.log[0].startswith("WARNING")


def test_blacklist_persist_failure_still_enforced(tmp_path, monkeypatch):
    ctl = make(tmp_path=tmp_path)

    def fail(mac):
        raise PersistFailure("read-only filesystem")

    monkeypatch.setattr(ctl.blacklist, "blacklist_add", fail)
    out = ctl.on_alert(alert("Classe 3 - Hping3 DoS Detected"))
    assert len(out.commands) == 2
    assert any("ERROR" in line for line in out.log)
    rejected = ctl.on_packet_in(PacketIn(1, frame(ATTACKER, VICTIM)))
    assert rejected.log[-1] == REJECT_SUSPECT


def test_startup_reconcile():
    assert make().startup_reconcile() == []
    ctl = make(blacklist=[ATTACKER])
    cmds = ctl.startup_reconcile()
    assert [c.command for c in cmds] == [FlowModCommand.DELETE] * 2
    sw = FlowSwitch()
    for m in (Match(1, ATTACKER, VICTIM), Match(2, VICTIM, ATTACKER), Match(2, VICTIM, STRANGER)):
        sw.apply_flow_mod(FlowMod(FlowModCommand.ADD, m, 10, (Output(4),)))
    for c in cmds:
        sw.apply_flow_mod(c)
    assert str(ATTACKER) not in sw.table_digest()
    assert str(STRANGER) in sw.table_digest()


def test_custom_policy():
    ctl = make(policy={1: (Treatment.STORE, Treatment.DROP)})
    out = ctl.on_alert(alert("Class 1 - ICMP detected"))
    assert [c.command for c in out.commands] == [FlowModCommand.DELETE] * 2


def test_config_parsing(tmp_path):
    text = """
    # controller settings
    honeypot_port = 5
    whitelist = lists/white.txt
    alert_port = 127.0.0.1:6000
    policy.1 = store, warn
    """
    cfg = ControllerConfig.from_text(text, tmp_path)
    assert cfg.honeypot_port == 5 and cfg.mirror_port == 3
    assert cfg.whitelist == tmp_path / "lists/white.txt"
    assert cfg.policy[1] == (Treatment.STORE, Treatment.WARN)
    assert cfg.policy[3] == (Treatment.STORE, Treatment.DROP, Treatment.BLACKLIST)
    for bad in ("honeypot_port = 3", "nonsense = 1", "policy.2 = explode", "honeypot_port = x"):
        with pytest.raises(ConfigError):
            ControllerConfig.from_text(bad)


# --- properties over random event sequences ---------------------------------

POOL = [ATTACKER, VICTIM, STRANGER, MacAddr.parse("00:90:f5:c4:0e:8f")]
ADMITTED = [str(m) for m in POOL[:2]] + ["00:90:f5:c4:0e:8f"]
ALERT_MSGS = ["Class 1 - ICMP detected", "Class 2 - SCAN Nmap XMAS",
              "Classe 3 - Hping3 DoS Detected", "odd event"]

events = st.lists(st.one_of(
    st.tuples(st.just("pkt"), st.sampled_from([1, 2, 4]), st.sampled_from(POOL), st.sampled_from(POOL)),
    st.tuples(st.just("alert"), st.sampled_from(ALERT_MSGS), st.sampled_from(POOL), st.sampled_from(POOL)),
), max_size=40)


def replay(seq):
    ctl = make(whitelist=ADMITTED)
    sw = FlowSwitch()
    trace = []
    for kind, a, src, dst in seq:
        if kind == "pkt":
            out = ctl.on_packet_in(PacketIn(a, frame(src, dst)))
        else:
            out = ctl.on_alert(alert(a, src, dst))
        trace.append((out.commands, out.log))
        for cmd in out.commands:
            if isinstance(cmd, FlowMod):
                if cmd.command is FlowModCommand.ADD:
                    assert str(cmd.match.eth_src) in ADMITTED
                    assert not ctl.is_suspect(cmd.match.eth_src)
                sw.apply_flow_mod(cmd)
        if kind == "alert":
            cls = classify_alert(a)
            if cls == 3:
                assert sw.entries_involving(src) == []
                assert src in ctl.blacklist
            elif cls == 2 and not ctl.is_suspect(src):
                assert all(e.actions == (Output(4),) for e in sw.entries_involving(src))
            elif cls == 1:
                assert [c for c in out.commands] == []
    return ctl, sw, trace


@settings(max_examples=300)
@given(events)
def test_deny_by_default_and_treatment_invariants(seq):
    replay(seq)


@settings(max_examples=50)
@given(events)
def test_identical_input_identical_output(seq):
    _, sw1, t1 = replay(seq)
    _, sw2, t2 = replay(seq)
    assert t1 == t2 and sw1.table_digest() == sw2.table_digest()


@settings(max_examples=300)
@given(events)
def test_redirection_persists_over_time(seq):
    """Once redirected, a MAC's later flows still only lead to the honeypot."""
    ctl, sw, _ = replay(seq + [("alert", ALERT_MSGS[1], ATTACKER, VICTIM)] + seq)
    if not ctl.is_suspect(ATTACKER):
        assert all(e.actions == (Output(4),) for e in sw.entries_involving(ATTACKER))
