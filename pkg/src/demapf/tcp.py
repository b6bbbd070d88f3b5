"""Multi-process negotiation over TCP.

The coordinating process hosts every Router and some Travellers; a worker
process hosts the remaining Travellers.  Each frame on the socket is a
4-byte big-endian length followed by a UTF-8 JSON object with ``"v": 1``.
Frames are either :class:`~demapf.protocol.RoundMessage` objects or small
control records (``{"v": 1, "control": ...}``) that mark the phase
barriers of a round.
"""

from __future__ import annotations

import socket
import subprocess
import sys
from typing import Iterable, Sequence

from .engine import LocalHost
from .netmodel import RoadNetwork, TravellerSpec, WorldConfig
from .plan import ProtocolViolation
from .protocol import WIRE_VERSION, RoundMessage, decode_body, encode_frame
from .traveller import Traveller

__all__ = ["TransportError", "FramedSocket", "RemoteHost", "serve_worker", "spawn_worker",
           "parse_address"]


class TransportError(ConnectionError):
    """The TCP link dropped; lossy channels are not handled, so the run aborts."""


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


class FramedSocket:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.frames_sent = 0

    def send(self, obj: dict) -> None:
        try:
            self.sock.sendall(encode_frame(obj))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc
        self.frames_sent += 1

    def _exactly(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from exc
            if not chunk:
                raise TransportError("connection closed by peer")
            buf += chunk
        return bytes(buf)

    def recv(self) -> dict:
        (n,) = int.from_bytes(self._exactly(4), "big"),
        return decode_body(self._exactly(n))

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def _control(kind: str, **fields) -> dict:
    return {"v": WIRE_VERSION, "control": kind, **fields}


def _read_until_done(link: FramedSocket, rnd: int | None = None) -> list[RoundMessage]:
    out = []
    while True:
        obj = link.recv()
        ctl = obj.get("control")
        if ctl == "done":
            if rnd is not None and obj.get("round") != rnd:
                raise ProtocolViolation("barrier for the wrong round", obj)
            return out
        if ctl == "error":
            raise ProtocolViolation(f"worker reported: {obj.get('message')}", obj)
        if ctl is not None:
            raise ProtocolViolation(f"unexpected control frame {ctl!r}", obj)
        out.append(RoundMessage.from_json(obj))


class RemoteHost:
    """Coordinator-side stand-in for the Travellers living in a worker process."""

    def __init__(self, link: FramedSocket, specs: Sequence[TravellerSpec], net: RoadNetwork,
                 cfg: WorldConfig, process: subprocess.Popen | None = None):
        self.link = link
        self.process = process
        self._ids = [s.id for s in specs]
        link.send(_control("init", network=net.to_json(), travellers=[s.to_json() for s in specs],
                           config={"t_min": cfg.t_min, "edge_length": cfg.edge_length,
                                   "node_length": cfg.node_length}))
        self._initial = _read_until_done(link, 0)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def start(self) -> list[RoundMessage]:
        return self._initial

    def emit(self, rnd: int) -> list[RoundMessage]:
        self.link.send(_control("emit", round=rnd))
        return _read_until_done(self.link, rnd)

    def deliver(self, rnd: int, proposals: Iterable[RoundMessage]) -> list[RoundMessage]:
        for msg in proposals:
            self.link.send(msg.to_json())
        self.link.send(_control("process", round=rnd))
        return _read_until_done(self.link, rnd)

    def stats(self) -> dict[str, dict]:
        self.link.send(_control("stats"))
        obj = self.link.recv()
        if obj.get("control") != "stats":
            raise ProtocolViolation("expected a stats frame", obj)
        return obj["travellers"]

    def close(self) -> None:
        try:
            self.link.send(_control("stop"))
        except TransportError:
            pass
        self.link.close()
        if self.process is not None:
            self.process.wait(timeout=30)


def serve_worker(address: str) -> int:
    """Worker main loop: host Travellers for a coordinator at ``address``."""
    link = FramedSocket(socket.create_connection(parse_address(address)))
    host = None
    pending: list[RoundMessage] = []
    try:
        while True:
            obj = link.recv()
            ctl = obj.get("control")
            try:
                if ctl is None:
                    pending.append(RoundMessage.from_json(obj))
                elif ctl == "init":
                    net = RoadNetwork.from_json(obj["network"])
                    cfg = WorldConfig(**obj["config"])
                    specs = [TravellerSpec.from_json(t) for t in obj["travellers"]]
                    host = LocalHost([Traveller(s, net, cfg) for s in specs])
                    _reply(link, host.start(), 0)
                elif ctl == "emit":
                    _reply(link, host.emit(obj["round"]), obj["round"])
                elif ctl == "process":
                    batch, pending = pending, []
                    _reply(link, host.deliver(obj["round"], batch), obj["round"])
                elif ctl == "stats":
                    link.send(_control("stats", travellers=host.stats()))
                elif ctl == "stop":
                    return 0
                else:
                    raise ProtocolViolation(f"unknown control frame {ctl!r}", obj)
            except ProtocolViolation as exc:
                link.send(_control("error", message=str(exc)))
                return 1
    except TransportError:
        return 1
    finally:
        link.close()


def _reply(link: FramedSocket, msgs: Iterable[RoundMessage], rnd: int) -> None:
    for m in msgs:
        link.send(m.to_json())
    link.send(_control("done", round=rnd))


def spawn_worker(listen: str = "127.0.0.1:0", external: bool = False,
                 timeout: float = 60.0) -> tuple[FramedSocket, subprocess.Popen | None]:
    """Listen on ``listen`` and accept one worker.

    Unless ``external`` is set, the worker is started here as a child
    process running ``python -m demapf.cli worker``.
    """
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind(parse_address(listen))
    server.listen(1)
    server.settimeout(timeout)
    host, port = server.getsockname()
    proc = None
    if not external:
        proc = subprocess.Popen([sys.executable, "-m", "demapf.cli", "worker",
                                 "--connect", f"{host}:{port}"])
    try:
        conn, _ = server.accept()
    except socket.timeout as exc:
        if proc is not None:
            proc.kill()
        raise TransportError("no worker connected") from exc
    finally:
        server.close()
    conn.settimeout(None)
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return FramedSocket(conn), proc
