"""File-backed MAC whitelist / blacklist.

File format: one MAC per line, ``#`` starts a comment, blank lines ignored.
"""
from __future__ import annotations

import enum
import os
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Union

from .packet import MacAddr, MalformedMac as _BadMac


class AccessListError(Exception):
    pass


class MalformedMac(AccessListError):
    def __init__(self, path, line: int, text: str):
        super().__init__(f"{path}:{line}: malformed MAC address {text!r}")
        self.line = line


class MissingFile(AccessListError):
    pass


class PersistFailure(AccessListError):
    pass


class Kind(str, enum.Enum):
    WHITELIST = "whitelist"
    BLACKLIST = "blacklist"


class AddResult(str, enum.Enum):
    INSERTED = "inserted"
    ALREADY_PRESENT = "already_present"


def parse_lines(lines: Iterable[str], path="<memory>") -> list[MacAddr]:
    seen: dict[MacAddr, None] = {}
    for lineno, raw in enumerate(lines, 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            seen.setdefault(MacAddr.parse(text))
        except _BadMac:
            raise MalformedMac(path, lineno, text) from None
    return list(seen)


class AccessList:
    def __init__(self, kind: Union[Kind, str], path=None, entries: Iterable[MacAddr] = ()):
        self.kind = Kind(kind)
        self.path = Path(path) if path is not None else None
        self._entries: dict[MacAddr, None] = dict.fromkeys(MacAddr.parse(m) for m in entries)

    @classmethod
    def load(cls, path, kind: Union[Kind, str]) -> "AccessList":
        kind = Kind(kind)
        path = Path(path)
        try:
            text = path.read_text()
        except FileNotFoundError:
            if kind is Kind.WHITELIST:
                raise MissingFile(f"whitelist file {path} does not exist") from None
            return cls(kind, path)
        return cls(kind, path, parse_lines(text.splitlines(), path))

    @property
    def entries(self) -> list[MacAddr]:
        return list(self._entries)

    def __iter__(self) -> Iterator[MacAddr]:
        return iter(list(self._entries))

    def __len__(self) -> int:
        return len(self._entries)

    def contains(self, mac: Union[MacAddr, str]) -> bool:
        try:
            return MacAddr.parse(mac) in self._entries
        except _BadMac:
            return False

    __contains__ = contains

    def as_strings(self) -> list[str]:
        return [str(m) for m in self._entries]

    def blacklist_add(self, mac: Union[MacAddr, str]) -> AddResult:
        if self.kind is not Kind.BLACKLIST:
            raise AccessListError("the whitelist is read-only at runtime")
        mac = MacAddr.parse(mac)
        if mac in self._entries:
            return AddResult.ALREADY_PRESENT
        self._entries[mac] = None
        if self.path is not None:
            try:
                self._persist()
            except OSError as exc:
                del self._entries[mac]
                raise PersistFailure(f"cannot write {self.path}: {exc}") from exc
        return AddResult.INSERTED

    def _persist(self) -> None:
        # write-temp-then-rename so a crash never leaves a half-written list
        directory = self.path.parent
        fd, tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=directory)
        try:
            with os.fdopen(fd, "w") as fh:
                fh.writelines(f"{m}\n" for m in self._entries)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def __repr__(self):
        return f"AccessList({self.kind.value}, {self.as_strings()})"
