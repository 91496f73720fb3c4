"""Detector-to-controller alert channel.

Each message is ``magic:u16 (0x4944) | version:u16 (1) | payload_length:u32``
followed by a 256-byte NUL-padded alert text and the raw triggering frame.
"""
from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
import time
from typing import Callable, Iterable, Optional, Union

from .alerts import AlertEvent

log = logging.getLogger(__name__)

MAGIC = 0x4944
VERSION = 1
ALERTMSG_SIZE = 256
DEFAULT_ALERT_PORT = 51234
_HEADER = struct.Struct("!HHI")


class AlertWireError(ValueError):
    pass


class BadMagic(AlertWireError):
    pass


class BadVersion(AlertWireError):
    pass


class Truncated(AlertWireError):
    pass


class MsgTooLong(AlertWireError):
    pass


class ConnectionLost(ConnectionError):
    pass


class BindFailure(OSError):
    pass


def parse_endpoint(text: Union[str, int, None], default_port: int,
                   default_host: str = "127.0.0.1") -> tuple[str, int]:
    if text is None or text == "":
        return default_host, default_port
    if isinstance(text, int):
        return default_host, text
    host, sep, port = str(text).rpartition(":")
    if not sep:
        return default_host, int(port)
    return host or default_host, int(port)


def encode_alert(event: Union[AlertEvent, str], frame: Optional[bytes] = None) -> bytes:
    msg = event if isinstance(event, str) else event.msg
    if frame is None:
        frame = b"" if isinstance(event, str) else event.frame
    text = msg.encode("utf-8")
    if len(text) >= ALERTMSG_SIZE:
        raise MsgTooLong(f"alert text is {len(text)} bytes; at most {ALERTMSG_SIZE - 1} fit")
    if b"\x00" in text:
        raise AlertWireError("alert text may not contain NUL")
    payload = text.ljust(ALERTMSG_SIZE, b"\x00") + frame
    return _HEADER.pack(MAGIC, VERSION, len(payload)) + payload


def _read_header(data) -> int:
    magic, version, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"magic {magic:#06x}, expected {MAGIC:#06x}")
    if version != VERSION:
        raise BadVersion(f"version {version}, expected {VERSION}")
    if length < ALERTMSG_SIZE:
        raise Truncated(f"payload_length {length} leaves no room for the alert text")
    return length


def _split_payload(payload: bytes) -> tuple[str, bytes]:
    text = payload[:ALERTMSG_SIZE]
    end = text.find(b"\x00")
    if end < 0:
        raise AlertWireError("alert text is not NUL-terminated")
    return text[:end].decode("utf-8", errors="replace"), bytes(payload[ALERTMSG_SIZE:])


def decode_alert(data: bytes) -> tuple[str, bytes]:
    """Decode exactly one message; returns ``(alertmsg, frame)``."""
    if len(data) < _HEADER.size:
        raise Truncated(f"{len(data)} bytes is shorter than the header")
    length = _read_header(data)
    if _HEADER.size + length > len(data):
        raise Truncated(f"payload_length {length} exceeds the {len(data) - _HEADER.size} bytes present")
    if _HEADER.size + length < len(data):
        raise AlertWireError("trailing bytes after alert message")
    return _split_payload(data[_HEADER.size:])


class AlertStream:
    """Incremental decoder for a chunked alert byte stream."""

    def __init__(self):
        self._buf = bytearray()

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> list[tuple[str, bytes]]:
        self._buf += data
        out = []
        while len(self._buf) >= _HEADER.size:
            length = _read_header(self._buf)
            end = _HEADER.size + length
            if len(self._buf) < end:
                break
            out.append(_split_payload(bytes(self._buf[_HEADER.size:end])))
            del self._buf[:end]
        return out


AlertSink = Callable[[str, bytes], None]


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        listener: AlertListener = self.server.listener
        stream = AlertStream()
        listener.connections += 1
        while True:
            try:
                chunk = self.request.recv(65536)
            except OSError:
                chunk = b""
            if not chunk:
                break
            try:
                messages = stream.feed(chunk)
            except AlertWireError as exc:
                log.warning("alert stream from %s corrupt (%s); closing", self.client_address, exc)
                return
            for msg, frame in messages:
                listener.received += 1
                listener.sink(msg, frame)
        if stream.pending:
            listener.partial_discarded += 1
            log.warning("discarded %d bytes of partial alert from %s",
                        stream.pending, self.client_address)


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class AlertListener:
    """TCP listener that hands each decoded alert to ``sink(alertmsg, frame)``."""

    def __init__(self, sink: AlertSink, host: str = "127.0.0.1", port: int = DEFAULT_ALERT_PORT):
        self.sink = sink
        self.host = host
        self.port = port
        self.received = 0
        self.partial_discarded = 0
        self.connections = 0
        self._server: Optional[_Server] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "AlertListener":
        try:
            self._server = _Server((self.host, self.port), _Handler)
        except OSError as exc:
            raise BindFailure(f"cannot listen on {self.host}:{self.port}: {exc}") from exc
        self._server.listener = self
        self._thread = threading.Thread(target=self._server.serve_forever, args=(0.05,),
                                        name="alert-listener", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class RelayClient:
    """Sends alerts to the controller; reconnects with exponential backoff.

    Alerts that cannot be delivered while disconnected are dropped and
    counted in ``dropped``.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_ALERT_PORT,
                 retries: int = 5, backoff: float = 0.05, max_backoff: float = 1.0,
                 timeout: float = 2.0):
        self.host, self.port = host, port
        self.retries = retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.timeout = timeout
        self.sent = 0
        self.dropped = 0
        self._sock: Optional[socket.socket] = None

    def connect(self) -> None:
        delay = self.backoff
        for attempt in range(self.retries + 1):
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
                return
            except OSError as exc:
                if attempt == self.retries:
                    raise ConnectionLost(f"cannot reach {self.host}:{self.port}: {exc}") from exc
                time.sleep(delay)
                delay = min(delay * 2, self.max_backoff)

    def send(self, event: Union[AlertEvent, str], frame: Optional[bytes] = None) -> bool:
        data = encode_alert(event, frame)
        try:
            if self._sock is None:
                self.connect()
            self._sock.sendall(data)
        except (OSError, ConnectionLost) as exc:
            log.warning("alert dropped: %s", exc)
            self.dropped += 1
            self.close()
            return False
        self.sent += 1
        return True

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def relay_client(endpoint, source: Iterable[AlertEvent], **kwargs) -> RelayClient:
    """Forward every alert from ``source``; returns the client for its counters."""
    host, port = parse_endpoint(endpoint, DEFAULT_ALERT_PORT)
    client = RelayClient(host, port, **kwargs)
    with client:
        for event in source:
            client.send(event)
    return client


def alert_listener(endpoint, sink: AlertSink) -> AlertListener:
    host, port = parse_endpoint(endpoint, DEFAULT_ALERT_PORT)
    return AlertListener(sink, host, port).start()
