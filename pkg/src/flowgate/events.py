"""Append-only forensic event log (one JSON record per line)."""
from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

log = logging.getLogger(__name__)

FORMAT_TAG = "flowgate-events"
ACTIONS = ("stored", "rewritten", "dropped", "blacklisted", "warned")


class PersistFailure(Exception):
    pass


class StoreFormatError(Exception):
    pass


@dataclass
class StoredEvent:
    ts: int
    msg: str
    class_: Optional[int] = None
    sid: Optional[int] = None
    src_mac: Optional[str] = None
    dst_mac: Optional[str] = None
    src_ip: Optional[str] = None
    dst_ip: Optional[str] = None
    proto: Optional[int] = None
    action_taken: list[str] = field(default_factory=list)
    seq: int = 0

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["class"] = rec.pop("class_")
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "StoredEvent":
        rec = dict(rec)
        rec["class_"] = rec.pop("class")
        return cls(**rec)

    def to_line(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"))


@dataclass
class LoadedLog:
    clock: str
    events: list[StoredEvent]
    discarded_partial: int
    valid_bytes: int


def _header_line(clock: str) -> str:
    return json.dumps({"format": FORMAT_TAG, "version": 1, "clock": clock},
                      sort_keys=True, separators=(",", ":"))


def read_log(path) -> LoadedLog:
    """Read every complete (newline-terminated) record; a partial tail is discarded."""
    data = Path(path).read_bytes()
    end = data.rfind(b"\n") + 1
    discarded = 1 if end < len(data) else 0
    lines = data[:end].splitlines()
    if not lines:
        return LoadedLog("virtual", [], discarded, 0)
    try:
        header = json.loads(lines[0])
    except ValueError:
        raise StoreFormatError(f"{path}: bad header line") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
        raise StoreFormatError(f"{path}: not a flowgate event log")
    events = []
    for n, line in enumerate(lines[1:], 2):
        try:
            events.append(StoredEvent.from_record(json.loads(line)))
        except (ValueError, TypeError, KeyError):
            raise StoreFormatError(f"{path}:{n}: corrupt record") from None
    return LoadedLog(header.get("clock", "virtual"), events, discarded, end)


def query(events: Iterable[StoredEvent], class_=None, src_mac=None, since=None,
          until=None, action=None) -> list[StoredEvent]:
    """Filter events; every given criterion must hold. Time bounds are inclusive."""
    if src_mac is not None:
        src_mac = str(src_mac).lower()
    out = []
    for ev in events:
        if class_ is not None and ev.class_ != class_:
            continue
        if src_mac is not None and ev.src_mac != src_mac:
            continue
        if since is not None and ev.ts < since:
            continue
        if until is not None and ev.ts > until:
            continue
        if action is not None and action not in ev.action_taken:
            continue
        out.append(ev)
    return sorted(out, key=lambda e: e.seq)


def stats(events: Iterable[StoredEvent]) -> dict[Optional[int], int]:
    return dict(Counter(ev.class_ for ev in events))


class EventStore:
    """Single-writer append log.

    ``path=None`` keeps events in memory only. Opening an existing log
    trims an incomplete trailing record before appending.
    """

    def __init__(self, path=None, clock: str = "virtual", fsync: bool = False):
        self.path = Path(path) if path is not None else None
        self.clock = clock
        self.fsync = fsync
        self.discarded_partial = 0
        self._events: list[StoredEvent] = []
        self._fh = None
        if self.path is not None:
            self._open()

    def _open(self) -> None:
        if self.path.exists() and self.path.stat().st_size:
            loaded = read_log(self.path)
            self.discarded_partial = loaded.discarded_partial
            if loaded.discarded_partial:
                log.warning("%s: discarded partial trailing record", self.path)
            self._events = loaded.events
            self.clock = loaded.clock
            self._fh = open(self.path, "r+b")
            self._fh.truncate(loaded.valid_bytes)
            self._fh.seek(loaded.valid_bytes)
            if loaded.valid_bytes == 0:
                self._write(_header_line(self.clock))
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "wb")
            self._write(_header_line(self.clock))

    def _write(self, line: str) -> None:
        self._fh.write(line.encode() + b"\n")
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())

    @property
    def events(self) -> list[StoredEvent]:
        return list(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def append(self, event: StoredEvent) -> int:
        if not event.action_taken:
            raise ValueError("a stored event must record at least one action")
        seq = self._events[-1].seq + 1 if self._events else 1
        record = replace(event, seq=seq, action_taken=list(event.action_taken))
        if self._fh is not None:
            try:
                self._write(record.to_line())
            except OSError as exc:
                raise PersistFailure(str(exc)) from exc
        self._events.append(record)
        return seq

    def query(self, **criteria) -> list[StoredEvent]:
        return query(self._events, **criteria)

    def stats(self) -> dict[Optional[int], int]:
        return stats(self._events)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
