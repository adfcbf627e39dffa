"""Transports: how queries reach peers.

Contract: ``send(payload, remote, timeout) -> bytes | None`` (None is a
timeout / no answer) plus ``tcp_check(remote, timeout) -> bool`` for
port-level liveness. Two implementations ship: the in-process simnet
adapter, and a one-shot TCP transport for bitcoin-family peers. A helper
binds a simnet peer to a real localhost socket so the TCP path can be
exercised end to end without leaving the machine.
"""

from __future__ import annotations

import socket
import struct
import threading
from typing import Protocol

from .profiles import Endpoint
from .simnet import SimNetwork
from .wire import HEADER_LEN


class Transport(Protocol):
    def send(self, payload: bytes, remote: Endpoint, timeout: float) -> bytes | None: ...

    def tcp_check(self, remote: Endpoint, timeout: float) -> bool: ...


class SimnetTransport:
    """Serializes calls into a SimNetwork while honoring logical latency.

    Latency is logical, not slept: a remote whose configured latency exceeds
    the caller's timeout simply never answers.
    """

    def __init__(self, network: SimNetwork, source_host: str = "198.51.100.1"):
        self.network = network
        self.source_host = source_host
        self.latency: dict[Endpoint, float] = {}
        self._lock = threading.Lock()
        self.sends = 0

    def send(self, payload: bytes, remote: Endpoint, timeout: float) -> bytes | None:
        if self.latency.get(remote, 0.0) > timeout:
            return None
        with self._lock:
            self.sends += 1
            return self.network.serve(payload, self.source_host, remote)

    def tcp_check(self, remote: Endpoint, timeout: float) -> bool:
        if self.latency.get(remote, 0.0) > timeout:
            return False
        with self._lock:
            return self.network.tcp_connect(remote)


class TcpTransport:
    """One round trip over a fresh TCP connection (bitcoin-family framing).

    Reads a full frame when the response starts with a 24-byte header that
    announces its length; otherwise drains until the peer closes or the
    timeout hits, so non-protocol endpoints still yield their bytes for
    classification.
    """

    def __init__(self, source_host: str = "0.0.0.0"):
        self.source_host = source_host

    def send(self, payload: bytes, remote: Endpoint, timeout: float) -> bytes | None:
        try:
            with socket.create_connection(remote, timeout=timeout) as conn:
                conn.settimeout(timeout)
                conn.sendall(payload)
                return _read_response(conn, timeout)
        except OSError:
            return None

    def tcp_check(self, remote: Endpoint, timeout: float) -> bool:
        try:
            with socket.create_connection(remote, timeout=timeout):
                return True
        except OSError:
            return False


def _read_response(conn: socket.socket, timeout: float) -> bytes | None:
    buf = b""
    want = None
    while True:
        if want is None and len(buf) >= HEADER_LEN:
            (length,) = struct.unpack("<I", buf[16:20])
            want = HEADER_LEN + length
        if want is not None and len(buf) >= want:
            return buf[:want]
        try:
            chunk = conn.recv(8192)
        except socket.timeout:
            return buf or None
        if not chunk:
            return buf or None
        buf += chunk


class SimnetSocketServer:
    """Expose one simnet peer on a real localhost socket (wire-level tests).

    Speaks bitcoin-family framing: reads one frame per request, answers with
    whatever the simulated peer would say, closes when the client does.
    """

    def __init__(self, network: SimNetwork, peer_endpoint: Endpoint):
        self.network = network
        self.peer_endpoint = peer_endpoint
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen(8)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True)

    @property
    def address(self) -> Endpoint:
        host, port = self._sock.getsockname()
        return (host, port)

    def __enter__(self) -> "SimnetSocketServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._stop.set()
        try:
            socket.create_connection(self.address, timeout=1).close()  # unblock accept
        except OSError:
            pass
        self._sock.close()
        self._thread.join(timeout=2)

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._sock.accept()
            except OSError:
                return
            if self._stop.is_set():
                conn.close()
                return
            threading.Thread(target=self._handle, args=(conn, addr), daemon=True).start()

    def _handle(self, conn: socket.socket, addr) -> None:
        src_host = addr[0]
        with conn:
            conn.settimeout(5.0)
            buf = b""
            while not self._stop.is_set():
                want = None
                if len(buf) >= HEADER_LEN:
                    (length,) = struct.unpack("<I", buf[16:20])
                    want = HEADER_LEN + length
                if want is not None and len(buf) >= want:
                    frame, buf = buf[:want], buf[want:]
                    reply = self.network.serve(frame, src_host, self.peer_endpoint)
                    if reply is not None:
                        try:
                            conn.sendall(reply)
                        except OSError:
                            return
                    continue
                try:
                    chunk = conn.recv(8192)
                except socket.timeout:
                    return
                except OSError:
                    return
                if not chunk:
                    return
                buf += chunk
