"""Live wiring over loopback sockets.

The controller owns a single work queue: alerts from the alert listener and
Packet_ins from connected switches are handled one at a time, in arrival
order, by one thread. Tap frames use a ``u16 length | frame`` framing.
"""
from __future__ import annotations

import logging
import queue
import socket
import socketserver
import struct
import threading
import time
from typing import Callable, Optional

from . import ofl
from .alert_wire import AlertListener, BindFailure, RelayClient, parse_endpoint
from .alerts import AlertEvent
from .controller import Controller, ControllerConfig
from .detector import Detector, Rule, VirtualClock, default_rules, load_rules
from .events import EventStore
from .packet import PacketError
from .switch import FlowSwitch

log = logging.getLogger(__name__)

_TAP_LEN = struct.Struct("!H")
_STOP = object()


def wall_ticks() -> int:
    return time.monotonic_ns() // 1000


def encode_tap(frame: bytes) -> bytes:
    return _TAP_LEN.pack(len(frame)) + frame


class TapStream:
    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        out = []
        while len(self._buf) >= _TAP_LEN.size:
            (n,) = _TAP_LEN.unpack_from(self._buf)
            if len(self._buf) < _TAP_LEN.size + n:
                break
            out.append(bytes(self._buf[_TAP_LEN.size:_TAP_LEN.size + n]))
            del self._buf[:_TAP_LEN.size + n]
        return out


class _ThreadingServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


def _serve(server: socketserver.BaseServer, name: str) -> threading.Thread:
    # a short poll interval keeps shutdown() quick
    thread = threading.Thread(target=server.serve_forever, args=(0.05,), name=name, daemon=True)
    thread.start()
    return thread


class _SwitchConnection(socketserver.BaseRequestHandler):
    def handle(self):
        live: LiveController = self.server.live
        live._attach(self)
        stream = ofl.MessageStream()
        self.send(ofl.Hello(live.xids()))
        try:
            while True:
                chunk = self.request.recv(65536)
                if not chunk:
                    break
                stream.feed(chunk)
                while True:
                    try:
                        msg = stream.next()
                    except ofl.OflError as exc:
                        log.warning("bad OFL message from switch: %s", exc)
                        stream.skip()
                        continue
                    if msg is None:
                        break
                    if isinstance(msg, ofl.EchoRequest):
                        self.send(ofl.EchoReply(msg.xid, msg.data))
                    elif isinstance(msg, ofl.PacketIn):
                        live.submit(("packet_in", self, msg))
        except OSError:
            pass
        finally:
            live._detach(self)

    def send(self, msg) -> None:
        try:
            self.request.sendall(ofl.encode(msg))
        except OSError as exc:
            log.warning("switch connection lost: %s", exc)


class LiveController:
    """Controller loop fed by the alert listener and the switch listener."""

    def __init__(self, controller: Controller, alert_endpoint, switch_endpoint,
                 store: Optional[EventStore] = None):
        self.controller = controller
        self.store = store if store is not None else controller.store
        self.alert_addr = parse_endpoint(alert_endpoint, 51234)
        self.switch_addr = parse_endpoint(switch_endpoint, 6653)
        self.xids = ofl.XidCounter()
        self.alerts_handled = 0
        self.packet_ins_handled = 0
        self._queue: queue.Queue = queue.Queue()
        self._switches: list[_SwitchConnection] = []
        self._lock = threading.Lock()
        self._alerts: Optional[AlertListener] = None
        self._server: Optional[_ThreadingServer] = None
        self._loop: Optional[threading.Thread] = None

    @classmethod
    def from_config(cls, config: ControllerConfig) -> "LiveController":
        store = EventStore(config.event_store, clock="wall")
        return cls(Controller.from_config(config, store), config.alert_port, config.listen, store)

    @property
    def alert_address(self) -> tuple[str, int]:
        return self._alerts.address

    @property
    def switch_address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "LiveController":
        self._alerts = AlertListener(self._on_alert_bytes, *self.alert_addr)
        self._alerts.start()
        try:
            self._server = _ThreadingServer(self.switch_addr, _SwitchConnection)
        except OSError as exc:
            self._alerts.stop()
            raise BindFailure(f"cannot listen on {self.switch_addr}: {exc}") from exc
        self._server.live = self
        _serve(self._server, "switch-listener")
        self._loop = threading.Thread(target=self._run, name="controller-loop", daemon=True)
        self._loop.start()
        return self

    def stop(self) -> None:
        if self._alerts is not None:
            self._alerts.stop()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        if self._loop is not None:
            self._queue.put(_STOP)
            self._loop.join(timeout=5)
        self.store.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def submit(self, item) -> None:
        self._queue.put(item)

    def _attach(self, conn) -> None:
        with self._lock:
            self._switches.append(conn)

    def _detach(self, conn) -> None:
        with self._lock:
            if conn in self._switches:
                self._switches.remove(conn)

    def _on_alert_bytes(self, msg: str, frame: bytes) -> None:
        try:
            event = AlertEvent.from_frame(msg, frame, timestamp=wall_ticks())
        except PacketError as exc:
            log.warning("alert %r carries an unusable frame (%s); ignored", msg, exc)
            return
        self.submit(("alert", None, event))

    def _send(self, conn, cmd) -> None:
        self.xids.stamp(cmd)
        targets = [conn] if conn is not None else list(self._switches)
        for target in targets:
            target.send(cmd)

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is _STOP:
                self._queue.task_done()
                return
            kind, conn, payload = item
            try:
                if kind == "alert":
                    outcome = self.controller.on_alert(payload)
                    self.alerts_handled += 1
                else:
                    outcome = self.controller.on_packet_in(payload)
                    self.packet_ins_handled += 1
                for cmd in outcome.commands:
                    self._send(conn if kind == "packet_in" else None, cmd)
            except Exception:
                log.exception("controller failed to handle %s", kind)
            finally:
                self._queue.task_done()

    def drain(self, timeout: float = 5.0) -> bool:
        """Wait until every submitted item has been handled."""
        deadline = time.monotonic() + timeout
        while self._queue.unfinished_tasks:
            if time.monotonic() > deadline:
                return False
            time.sleep(0.005)
        return True


class SwitchAgent:
    """A simulated switch speaking OFL to a live controller.

    Mirror-port copies are handed to ``on_mirror`` (e.g. a TapServer).
    """

    def __init__(self, switch: FlowSwitch, controller_endpoint,
                 on_mirror: Optional[Callable[[bytes], None]] = None,
                 on_emit: Optional[Callable[[int, bytes], None]] = None):
        self.switch = switch
        self.addr = parse_endpoint(controller_endpoint, 6653)
        self.on_mirror = on_mirror
        self.on_emit = on_emit
        self.xids = ofl.XidCounter()
        self._sock: Optional[socket.socket] = None
        self._reader: Optional[threading.Thread] = None
        self._lock = threading.Lock()

    def connect(self) -> "SwitchAgent":
        self._sock = socket.create_connection(self.addr, timeout=5)
        self._sock.settimeout(None)
        self._sock.sendall(ofl.encode(ofl.Hello(self.xids())))
        self._reader = threading.Thread(target=self._read, name="switch-agent", daemon=True)
        self._reader.start()
        return self

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
            self._sock = None

    def _emit(self, port: int, frame: bytes) -> None:
        if port == self.switch.mirror_port:
            if self.on_mirror:
                self.on_mirror(frame)
        elif self.on_emit:
            self.on_emit(port, frame)

    def ingress(self, port: int, frame: bytes) -> None:
        with self._lock:
            emissions, packet_in = self.switch.ingress(port, frame)
        for out_port, out_frame in emissions:
            self._emit(out_port, out_frame)
        if packet_in is not None:
            self.xids.stamp(packet_in)
            self._sock.sendall(ofl.encode(packet_in))

    def _read(self) -> None:
        stream = ofl.MessageStream()
        sock = self._sock
        while True:
            try:
                chunk = sock.recv(65536)
            except OSError:
                return
            if not chunk:
                return
            stream.feed(chunk)
            for msg in stream:
                with self._lock:
                    if isinstance(msg, ofl.FlowMod):
                        self.switch.apply_flow_mod(msg)
                        emissions = []
                    elif isinstance(msg, ofl.PacketOut):
                        emissions = self.switch.apply_packet_out(msg)
                    elif isinstance(msg, ofl.EchoRequest):
                        sock.sendall(ofl.encode(ofl.EchoReply(msg.xid, msg.data)))
                        emissions = []
                    else:
                        emissions = []
                for out_port, out_frame in emissions:
                    self._emit(out_port, out_frame)


class _TapHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server: TapServer = self.server.tap
        with server._cond:
            server._clients.append(self.request)
        try:
            while self.request.recv(1):
                pass
        except OSError:
            pass
        finally:
            with server._cond:
                server._clients.remove(self.request)


class TapServer:
    """Serves mirror-port frames to detector tap clients."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._server = _ThreadingServer((host, port), _TapHandler)
        self._server.tap = self
        self._clients: list[socket.socket] = []
        self._cond = threading.Condition()
        _serve(self._server, "tap-server")

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def wait_for_client(self, timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._cond:
                if self._clients:
                    return True
            time.sleep(0.01)
        return False

    def publish(self, frame: bytes) -> None:
        data = encode_tap(frame)
        with self._cond:
            for client in list(self._clients):
                try:
                    client.sendall(data)
                except OSError:
                    pass

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class TapDetector:
    """Reads frames from a tap endpoint, detects, and relays alerts."""

    def __init__(self, tap_endpoint, rules: list[Rule], relay: RelayClient):
        self.addr = parse_endpoint(tap_endpoint, 0)
        self.clock = VirtualClock()
        self.detector = Detector(rules, self.clock)
        self.relay = relay
        self.frames = 0
        self._sock: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "TapDetector":
        self._sock = socket.create_connection(self.addr, timeout=5)
        self._sock.settimeout(None)
        self._thread = threading.Thread(target=self._run, name="tap-detector", daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        stream = TapStream()
        while True:
            try:
                chunk = self._sock.recv(65536)
            except OSError:
                break
            if not chunk:
                break
            for frame in stream.feed(chunk):
                self.frames += 1
                tick = max(wall_ticks(), self.clock.now())
                for alert in self.detector.observe(tick, frame):
                    self.relay.send(alert)
        self.relay.close()

    def stop(self) -> None:
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
            self._sock = None


def start_live(config: ControllerConfig) -> tuple[LiveController, Optional[TapDetector]]:
    """Start the controller and, when ``config.tap`` is set, a detector on that tap."""
    live = LiveController.from_config(config).start()
    tap = None
    if config.tap:
        rules = load_rules(config.rules) if config.rules else default_rules()
        host, port = live.alert_address
        try:
            tap = TapDetector(config.tap, rules, RelayClient(host, port)).start()
        except OSError as exc:
            live.stop()
            raise BindFailure(f"cannot reach tap {config.tap}: {exc}") from exc
    return live, tap
