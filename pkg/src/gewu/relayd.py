"""Socket front end for the relay core: raw framed TCP plus WebSocket.

One listener serves both protocols: a connection opening with ``GET `` is
treated as a WebSocket upgrade (each binary message is ``[lane][payload]``),
anything else as the length-prefixed stream format.  The first message on
either protocol must be a ``relay.join`` envelope on the signaling lane; all
later traffic is forwarded verbatim.  A second port answers health checks
with plain text counters.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time

from . import framing, ws
from .envelope import Envelope, IdFactory, encode
from .netsim import LANE_SIGNALING
from .relay import (
    DEFAULT_ROOM_TTL_S,
    PeerAbsent,
    RelayCore,
    RelayError,
    parse_join,
)

log = logging.getLogger(__name__)


class RelayServer:
    def __init__(self, port: int = 0, health_port: int = 0,
                 room_ttl_s: float = DEFAULT_ROOM_TTL_S,
                 host: str = "127.0.0.1"):
        self.core = RelayCore(room_ttl_s=room_ttl_s)
        self._lock = threading.Lock()
        self._ids = IdFactory("relay")
        self._host = host
        self._listener = socket.create_server((host, port))
        self._health = socket.create_server((host, health_port))
        self.port = self._listener.getsockname()[1]
        self.health_port = self._health.getsockname()[1]
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        for target in (self._accept_loop, self._health_loop, self._sweep_loop):
            thread = threading.Thread(target=target, daemon=True)
            thread.start()
            self._threads.append(thread)
        log.info("relay listening on %s:%d (health %d)",
                 self._host, self.port, self.health_port)

    def stop(self) -> None:
        self._stop.set()
        for sock in (self._listener, self._health):
            try:
                sock.close()
            except OSError:
                pass

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- accept/sweep/health ----------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except OSError:
                return
            thread = threading.Thread(target=self._serve_conn,
                                      args=(conn, addr), daemon=True)
            thread.start()

    def _sweep_loop(self) -> None:
        while not self._stop.wait(30.0):
            with self._lock:
                self.core.sweep()

    def _health_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._health.accept()
            except OSError:
                return
            try:
                conn.settimeout(2.0)
                try:
                    conn.recv(4096)  # request line, ignored
                except OSError:
                    pass
                with self._lock:
                    stats = self.core.stats()
                lines = ["ok",
                         f"rooms {len(stats['rooms'])}",
                         f"rooms_created {stats['rooms_created']}"]
                for lane, snap in sorted(stats["lanes"].items()):
                    lines.append(f"lane{lane}_messages {snap['messages']}")
                    lines.append(f"lane{lane}_bytes {snap['bytes']}")
                body = "\n".join(lines) + "\n"
                conn.sendall(
                    b"HTTP/1.0 200 OK\r\nContent-Type: text/plain\r\n"
                    b"Content-Length: " + str(len(body)).encode()
                    + b"\r\n\r\n" + body.encode())
            finally:
                conn.close()

    # -- per-connection -----------------------------------------------------------

    def _serve_conn(self, conn: socket.socket, addr) -> None:
        token = None
        write_lock = threading.Lock()
        try:
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            first = conn.recv(4096)
            if not first:
                return
            if first.startswith(b"GET "):
                send, recv_messages = self._upgrade_websocket(conn, first,
                                                              write_lock)
            else:
                send, recv_messages = self._raw_stream(conn, first, write_lock)

            for lane, payload in recv_messages:
                if token is None:
                    if lane != LANE_SIGNALING:
                        raise RelayError("first message must join a session")
                    session, role = parse_join(payload)
                    with self._lock:
                        token = self.core.join(session, role, send)
                    log.info("%s joined %s as %s", addr, session, role)
                    continue
                with self._lock:
                    try:
                        token.forward(lane, payload)
                    except PeerAbsent:
                        pass  # lossy lanes tolerate an absent peer
        except (RelayError, framing.FramingError, ws.WsError,
                json.JSONDecodeError) as exc:
            log.warning("connection %s rejected: %s", addr, exc)
            self._send_error(conn, write_lock, str(exc))
        except OSError:
            pass
        finally:
            if token is not None:
                with self._lock:
                    token.leave()
            try:
                conn.close()
            except OSError:
                pass

    def _send_error(self, conn, write_lock, reason: str) -> None:
        env = Envelope(v=1, id=self._ids.next_id(), type="relay.error",
                       source="relay", ts=int(time.time() * 1000),
                       payload={"reason": reason})
        try:
            with write_lock:
                conn.sendall(framing.frame_message(LANE_SIGNALING, encode(env)))
        except OSError:
            pass

    def _raw_stream(self, conn, first: bytes, write_lock):
        deframer = framing.StreamDeframer()

        def send(lane: int, payload: bytes) -> None:
            with write_lock:
                conn.sendall(framing.frame_message(lane, payload))

        def messages():
            chunk = first
            while chunk:
                yield from deframer.feed(chunk)
                chunk = conn.recv(65536)

        return send, messages()

    def _upgrade_websocket(self, conn, first: bytes, write_lock):
        request = bytearray(first)
        while b"\r\n\r\n" not in request:
            chunk = conn.recv(4096)
            if not chunk:
                raise ws.WsError("handshake truncated")
            request.extend(chunk)
        head, _, rest = bytes(request).partition(b"\r\n\r\n")
        headers = ws.parse_handshake(head)
        with write_lock:
            conn.sendall(ws.handshake_response(headers))
        decoder = ws.FrameDecoder(require_mask=True)

        def send(lane: int, payload: bytes) -> None:
            frame = ws.encode_frame(ws.OP_BINARY, bytes([lane]) + payload)
            with write_lock:
                conn.sendall(frame)

        def messages():
            chunk = rest
            closed = False
            while not closed:
                if chunk:
                    for opcode, body in decoder.feed(chunk):
                        if opcode == ws.OP_CLOSE:
                            with write_lock:
                                conn.sendall(ws.encode_frame(ws.OP_CLOSE, body))
                            closed = True
                            break
                        if opcode == ws.OP_PING:
                            with write_lock:
                                conn.sendall(ws.encode_frame(ws.OP_PONG, body))
                            continue
                        if opcode not in (ws.OP_BINARY, ws.OP_TEXT):
                            continue
                        if not body:
                            raise ws.WsError("empty message lacks a lane byte")
                        yield body[0], bytes(body[1:])
                if closed:
                    break
                chunk = conn.recv(65536)
                if not chunk:
                    break

        return send, messages()


def serve(port: int, health_port: int, room_ttl_s: float,
          host: str = "127.0.0.1") -> RelayServer:
    server = RelayServer(port=port, health_port=health_port,
                         room_ttl_s=room_ttl_s, host=host)
    server.start()
    return server
