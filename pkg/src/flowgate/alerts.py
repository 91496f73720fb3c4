from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .packet import EthernetFrame, MacAddr, build_frame, parse_frame

_CLASS_PREFIX = re.compile(r"\s*classe?\s*(\d+)", re.IGNORECASE)


def classify_alert(msg: str) -> Optional[int]:
    """Alert class from a leading "Class N" (or "Classe N") prefix, else None."""
    m = _CLASS_PREFIX.match(msg)
    return int(m.group(1)) if m else None


@dataclass
class AlertEvent:
    """A security event raised by the detector about one triggering frame."""

    msg: str
    src_mac: MacAddr
    dst_mac: MacAddr
    src_ip: Optional[str] = None
    dst_ip: Optional[str] = None
    proto: Optional[int] = None
    sid: Optional[int] = None
    timestamp: int = 0
    class_: Optional[int] = None
    frame: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        if self.class_ is None:
            self.class_ = classify_alert(self.msg)

    @classmethod
    def from_frame(cls, msg: str, frame, timestamp: int = 0, sid=None) -> "AlertEvent":
        if isinstance(frame, EthernetFrame):
            raw = build_frame(frame)
        else:
            raw = bytes(frame)
            frame = parse_frame(raw)
        ip = frame.ip
        return cls(
            msg=msg, src_mac=frame.src, dst_mac=frame.dst,
            src_ip=str(ip.src) if ip else None, dst_ip=str(ip.dst) if ip else None,
            proto=ip.proto if ip else None, sid=sid, timestamp=timestamp, frame=raw,
        )
