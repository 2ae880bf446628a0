"""TCP relay client for live endpoints.

A reader thread deframes the stream into a thread-safe inbox; the owner's
main loop calls ``pump`` so every endpoint callback runs single-threaded,
mirroring the in-process wiring.
"""

from __future__ import annotations

import socket
import threading
from collections import deque
from typing import Callable

from . import framing
from .clock import wall_time_ms
from .envelope import Envelope, IdFactory, encode
from .netsim import LANE_SIGNALING
from .transport import SignalingUnreachable


class TcpRelayHandle:
    def __init__(self, client: "TcpRelayClient"):
        self._client = client

    def forward(self, lane: int, data: bytes) -> None:
        self._client.send(lane, data)

    def leave(self) -> None:
        self._client.close()


class TcpRelayClient:
    """Implements the relay-client interface over a framed TCP connection."""

    def __init__(self, host: str, port: int,
                 ids: IdFactory | None = None,
                 connect_timeout_s: float = 5.0):
        self._addr = (host, port)
        self._ids = ids or IdFactory("sock")
        self._timeout = connect_timeout_s
        self._sock: socket.socket | None = None
        self._write_lock = threading.Lock()
        self._inbox: deque[tuple[int, bytes]] = deque()
        self._inbox_lock = threading.Lock()
        self._on_message: Callable[[int, bytes], None] | None = None
        self._reader: threading.Thread | None = None
        self.connected = False

    def join(self, session_id: str, role: str,
             on_message: Callable[[int, bytes], None]) -> TcpRelayHandle:
        try:
            self._sock = socket.create_connection(self._addr,
                                                  timeout=self._timeout)
        except OSError as exc:
            raise SignalingUnreachable(
                f"relay {self._addr[0]}:{self._addr[1]}: {exc}") from None
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._on_message = on_message
        self.connected = True
        join_env = Envelope(v=1, id=self._ids.next_id(), type="relay.join",
                            source=self._ids.source, ts=wall_time_ms(),
                            payload={"session": session_id, "role": role})
        self.send(LANE_SIGNALING, encode(join_env))
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        return TcpRelayHandle(self)

    def send(self, lane: int, data: bytes) -> None:
        if not self.connected or self._sock is None:
            return
        try:
            with self._write_lock:
                self._sock.sendall(framing.frame_message(lane, data))
        except OSError:
            self.connected = False

    def _read_loop(self) -> None:
        deframer = framing.StreamDeframer()
        sock = self._sock
        try:
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    break
                messages = deframer.feed(chunk)
                with self._inbox_lock:
                    self._inbox.extend(messages)
        except (OSError, framing.FramingError):
            pass
        finally:
            self.connected = False

    def pump(self, max_n: int = 256) -> int:
        """Deliver up to ``max_n`` inbox messages on the caller's thread."""
        delivered = 0
        while delivered < max_n:
            with self._inbox_lock:
                if not self._inbox:
                    break
                lane, payload = self._inbox.popleft()
            if self._on_message is not None:
                self._on_message(lane, payload)
            delivered += 1
        return delivered

    def close(self) -> None:
        self.connected = False
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
