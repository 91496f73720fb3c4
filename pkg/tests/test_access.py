import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowgate.access import (AccessList, AccessListError, AddResult, Kind, MalformedMac,
                             MissingFile, PersistFailure)
from flowgate.packet import MacAddr

from .conftest import WHITELIST_MACS, macs


def test_load_default_whitelist(default_whitelist):
    wl = AccessList.load(default_whitelist, Kind.WHITELIST)
    assert wl.as_strings() == WHITELIST_MACS


def test_empty_file(tmp_path):
    path = tmp_path / "wl.txt"
    path.write_text("")
    assert AccessList.load(path, Kind.WHITELIST).as_strings() == []


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "wl.txt"
    path.write_text("# admitted hosts\n08:00:27:a2:b7:bd\nnot-a-mac\n")
    with pytest.raises(MalformedMac) as err:
        AccessList.load(path, Kind.WHITELIST)
    assert err.value.line == 3


def test_comments_blank_lines_and_duplicates(tmp_path):
    path = tmp_path / "wl.txt"
    path.write_text("\n08:00:27:A2:B7:BD  # attacker box\n08-00-27-a2-b7-bd\n")
    assert AccessList.load(path, Kind.WHITELIST).as_strings() == ["08:00:27:a2:b7:bd"]


def test_missing_whitelist_is_an_error_missing_blacklist_is_empty(tmp_path):
    with pytest.raises(MissingFile):
        AccessList.load(tmp_path / "nope.txt", Kind.WHITELIST)
    assert len(AccessList.load(tmp_path / "nope.txt", Kind.BLACKLIST)) == 0


def test_contains_is_case_insensitive(default_whitelist):
    bl = AccessList(Kind.BLACKLIST, entries=["08:00:27:a2:b7:bd"])
    assert bl.contains(MacAddr.parse("08:00:27:A2:B7:BD"))
    assert "08:00:27:A2:B7:BD" in bl
    wl = AccessList.load(default_whitelist, Kind.WHITELIST)
    assert not wl.contains("00:01:5c:48:0e:41")
    assert not AccessList(Kind.BLACKLIST).contains("00:01:5c:48:0e:41")
    assert not wl.contains("garbage")


def test_blacklist_add_persists_one_line(tmp_path):
    path = tmp_path / "bl.txt"
    bl = AccessList.load(path, Kind.BLACKLIST)
    assert bl.blacklist_add("08:00:27:a2:b7:bd") is AddResult.INSERTED
    assert path.read_text() == "08:00:27:a2:b7:bd\n"
    mtime = path.stat().st_mtime_ns
    assert bl.blacklist_add("08:00:27:A2:B7:BD") is AddResult.ALREADY_PRESENT
    assert path.read_text() == "08:00:27:a2:b7:bd\n"
    assert path.stat().st_mtime_ns == mtime


def test_whitelist_is_read_only(default_whitelist):
    wl = AccessList.load(default_whitelist, Kind.WHITELIST)
    with pytest.raises(AccessListError):
        wl.blacklist_add("00:01:5c:48:0e:41")


def test_persist_failure_rolls_back(tmp_path, monkeypatch):
    path = tmp_path / "bl.txt"
    path.write_text("00:00:00:00:00:01\n")
    bl = AccessList.load(path, Kind.BLACKLIST)

    def boom(*args):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(PersistFailure):
        bl.blacklist_add("08:00:27:a2:b7:bd")
    assert bl.as_strings() == ["00:00:00:00:00:01"]
    assert path.read_text() == "00:00:00:00:00:01\n"
    assert [p.name for p in tmp_path.iterdir()] == ["bl.txt"]  # temp file cleaned up


@settings(max_examples=20)
@given(st.lists(macs, max_size=100))
def test_reload_equals_memory(tmp_path_factory, added):
    path = tmp_path_factory.mktemp("bl") / "bl.txt"
    bl = AccessList.load(path, Kind.BLACKLIST)
    for mac in added:
        bl.blacklist_add(mac)
    reloaded = AccessList.load(path, Kind.BLACKLIST)
    assert set(reloaded) == set(bl) == set(added)
    assert len(reloaded) == len(set(added))


def test_hundred_random_adds_reload(tmp_path):
    import random
    rng = random.Random(7)
    path = tmp_path / "bl.txt"
    bl = AccessList.load(path, Kind.BLACKLIST)
    for _ in range(100):
        bl.blacklist_add(MacAddr(rng.randbytes(6)))
    assert set(AccessList.load(path, Kind.BLACKLIST)) == set(bl)
